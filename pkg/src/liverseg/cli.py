"""Batch command-line front-end.

Cases are listed in a manifest CSV (column ``case`` plus per-command path
columns; relative paths resolve against the manifest's directory). A JSON
config file can hold any long-form option; explicit command-line flags win
over the config, which wins over built-in defaults. One failing case never
aborts a batch: failures are collected into ``errors.json`` and the exit
code becomes 1.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import reports
from .analysis import CaseRecord, component_bboxes, stratified_kfold
from .metrics import CaseMetrics, aggregate, evaluate_case
from .morphology import Connectivity
from .pipeline import PipelineMode, PostprocessConfig, fuse_dual_binary, postprocess, run_pipeline
from .stats import PairedSample, run_significance_protocol
from .uncertainty import build_lesion_report
from .volume import BinaryMask, as_labelmap, read_probmap, read_volume, write_volume

DEFAULTS: dict = {
    "mode": "multiclass",
    "threshold": 0.5,
    "tau_mm": 2.0,
    "hd_percentile": 100.0,
    "alpha": 0.05,
    "seed": 0,
    "jobs": 1,
    "connectivity": "26",
    "hole_connectivity": "6",
    "dilate_element": "26",
    "dilate_iterations": 1,
    "close_element": "26",
    "close_iterations": 1,
    "skip_liver_step": False,
    "skip_lesion_filter": False,
    "skip_closing": False,
    "k": 5,
    "val_fraction": 8.0 / 48.0,
}

# Default comparison hypotheses: test whether pipeline A beats pipeline B.
DEFAULT_HYPOTHESES: dict[str, str] = {
    "liver_dice": "greater",
    "liver_surface_dice": "greater",
    "liver_hausdorff_mm": "less",
    "liver_assd_mm": "less",
    "tumor_dice": "greater",
    "tumor_surface_dice": "greater",
    "tumor_hausdorff_mm": "less",
    "tumor_assd_mm": "less",
    "tumor_burden_abs_error": "less",
}


class CliError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return config


def _resolve(args, config: dict, key: str):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return DEFAULTS[key]


def _postprocess_config(args, config: dict) -> PostprocessConfig:
    return PostprocessConfig(
        connectivity=Connectivity.parse(_resolve(args, config, "connectivity")),
        hole_connectivity=Connectivity.parse(_resolve(args, config, "hole_connectivity")),
        dilate_element=Connectivity.parse(_resolve(args, config, "dilate_element")),
        dilate_iterations=int(_resolve(args, config, "dilate_iterations")),
        close_element=Connectivity.parse(_resolve(args, config, "close_element")),
        close_iterations=int(_resolve(args, config, "close_iterations")),
        keep_liver_component=not _resolve(args, config, "skip_liver_step"),
        filter_tumors=not _resolve(args, config, "skip_lesion_filter"),
        close_tumors=not _resolve(args, config, "skip_closing"),
    )


def _read_manifest(path: str, required: tuple[str, ...]) -> list[dict]:
    base = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = set(reader.fieldnames or ())
        missing = {"case", *required} - columns
        if missing:
            raise CliError(f"manifest {path} lacks columns: {sorted(missing)}")
        for row in reader:
            entry = {k: (v.strip() if isinstance(v, str) else v) for k, v in row.items()}
            for key, value in list(entry.items()):
                if key != "case" and value:
                    p = Path(value)
                    entry[key] = str(p if p.is_absolute() else base / p)
            rows.append(entry)
    if not rows:
        raise CliError(f"manifest {path} lists no cases")
    ids = [r["case"] for r in rows]
    if len(set(ids)) != len(ids):
        raise CliError(f"manifest {path} has duplicate case ids")
    return sorted(rows, key=lambda r: r["case"])


def _strip_voxels(report):
    lesions = [replace(l, voxels=np.empty((0, 3), dtype=np.int64)) for l in report.lesions]
    return replace(report, lesions=lesions)


def _map_cases(rows, worker, settings: dict, jobs: int):
    if jobs <= 1:
        return [worker(row, settings) for row in rows]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, rows, [settings] * len(rows)))


def _finish_batch(out_dir: Path, results: list[dict]) -> int:
    errors = [
        {"case": r["case"], "error": r["error"]} for r in results if r.get("error")
    ]
    if errors:
        reports.write_json(out_dir / "errors.json", errors)
        for e in errors:
            print(f"error [{e['case']}]: {e['error']}", file=sys.stderr)
        return 1
    return 0


# -- run ----------------------------------------------------------------------

def _run_case(row: dict, s: dict) -> dict:
    case = row["case"]
    try:
        mode = PipelineMode.parse(s["mode"])
        if mode is PipelineMode.MULTICLASS:
            if not row.get("probs"):
                raise CliError("multiclass mode needs a 'probs' manifest column")
            probs = read_probmap(row["probs"])
            if probs.channels != 3:
                raise CliError(f"'probs' must have 3 channels, got {probs.channels}")
            seg = run_pipeline(mode, s["cfg"], probs=probs)
            tumor_prob = probs.channel(2)
        else:
            if not (row.get("liver_prob") and row.get("tumor_prob")):
                raise CliError("dual-binary mode needs 'liver_prob' and 'tumor_prob' columns")
            liver_prob = read_volume(row["liver_prob"])
            tumor_prob = read_volume(row["tumor_prob"])
            seg = run_pipeline(
                mode,
                s["cfg"],
                liver_prob=liver_prob,
                tumor_prob=tumor_prob,
                threshold=s["threshold"],
            )
        out_path = Path(s["out"]) / "segmentations" / f"{case}.nii.gz"
        write_volume(seg, out_path)

        gt = None
        if row.get("gt"):
            gt = as_labelmap(read_volume(row["gt"]))
        lesions = _strip_voxels(build_lesion_report(case, seg, tumor_prob, gt))
        metrics = None
        if gt is not None:
            metrics = evaluate_case(seg, gt, s["tau_mm"], s["hd_percentile"], case)
        return {"case": case, "metrics": metrics, "lesions": lesions, "error": None}
    except Exception as exc:  # one bad case must not abort the batch
        return {"case": case, "error": str(exc)}


def cmd_run(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    settings = {
        "mode": _resolve(args, config, "mode"),
        "cfg": _postprocess_config(args, config),
        "threshold": float(_resolve(args, config, "threshold")),
        "tau_mm": float(_resolve(args, config, "tau_mm")),
        "hd_percentile": float(_resolve(args, config, "hd_percentile")),
        "out": str(out_dir),
    }
    mode = PipelineMode.parse(settings["mode"])
    required = ("probs",) if mode is PipelineMode.MULTICLASS else ("liver_prob", "tumor_prob")
    rows = _read_manifest(args.manifest, required)
    jobs = int(_resolve(args, config, "jobs"))
    results = _map_cases(rows, _run_case, settings, jobs)

    lesion_reports = [r["lesions"] for r in results if not r.get("error")]
    reports.write_lesions_csv(out_dir / "lesions.csv", lesion_reports)
    reports.write_lesions_json(out_dir / "lesions.json", lesion_reports)
    case_metrics = [r["metrics"] for r in results if not r.get("error") and r["metrics"]]
    if case_metrics:
        reports.write_metrics_csv(out_dir / "metrics.csv", case_metrics)
        reports.write_aggregate_json(out_dir / "aggregate.json", aggregate(case_metrics))
    return _finish_batch(out_dir, results)


# -- evaluate -------------------------------------------------------------------

def _evaluate_case_worker(row: dict, s: dict) -> dict:
    case = row["case"]
    try:
        pred = as_labelmap(read_volume(row["pred"]))
        gt = as_labelmap(read_volume(row["gt"]))
        metrics = evaluate_case(pred, gt, s["tau_mm"], s["hd_percentile"], case)
        return {"case": case, "metrics": metrics, "error": None}
    except Exception as exc:
        return {"case": case, "error": str(exc)}


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    settings = {
        "tau_mm": float(_resolve(args, config, "tau_mm")),
        "hd_percentile": float(_resolve(args, config, "hd_percentile")),
    }
    rows = _read_manifest(args.manifest, ("pred", "gt"))
    jobs = int(_resolve(args, config, "jobs"))
    results = _map_cases(rows, _evaluate_case_worker, settings, jobs)
    case_metrics = [r["metrics"] for r in results if not r.get("error")]
    if case_metrics:
        reports.write_metrics_csv(out_dir / "metrics.csv", case_metrics)
        reports.write_aggregate_json(out_dir / "aggregate.json", aggregate(case_metrics))
    return _finish_batch(out_dir, results)


# -- postprocess ----------------------------------------------------------------

def _postprocess_worker(row: dict, s: dict) -> dict:
    case = row["case"]
    try:
        seg = as_labelmap(read_volume(row["seg"]))
        cleaned = postprocess(seg, PipelineMode.parse(s["mode"]), s["cfg"])
        write_volume(cleaned, Path(s["out"]) / "segmentations" / f"{case}.nii.gz")
        return {"case": case, "error": None}
    except Exception as exc:
        return {"case": case, "error": str(exc)}


def cmd_postprocess(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    settings = {
        "mode": _resolve(args, config, "mode"),
        "cfg": _postprocess_config(args, config),
        "out": str(out_dir),
    }
    rows = _read_manifest(args.manifest, ("seg",))
    jobs = int(_resolve(args, config, "jobs"))
    results = _map_cases(rows, _postprocess_worker, settings, jobs)
    return _finish_batch(out_dir, results)


# -- fuse -------------------------------------------------------------------

def _fuse_worker(row: dict, s: dict) -> dict:
    case = row["case"]
    try:
        liver = read_volume(row["liver_mask"])
        tumor = read_volume(row["tumor_mask"])
        fused = fuse_dual_binary(
            BinaryMask(liver.data, liver.spacing, liver.orientation),
            BinaryMask(tumor.data, tumor.spacing, tumor.orientation),
        )
        write_volume(fused, Path(s["out"]) / "segmentations" / f"{case}.nii.gz")
        return {"case": case, "error": None}
    except Exception as exc:
        return {"case": case, "error": str(exc)}


def cmd_fuse(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    rows = _read_manifest(args.manifest, ("liver_mask", "tumor_mask"))
    jobs = int(_resolve(args, config, "jobs"))
    results = _map_cases(rows, _fuse_worker, {"out": str(out_dir)}, jobs)
    return _finish_batch(out_dir, results)


# -- uncertainty --------------------------------------------------------------

def _uncertainty_worker(row: dict, s: dict) -> dict:
    case = row["case"]
    try:
        seg = as_labelmap(read_volume(row["seg"]))
        tumor_prob = read_volume(row["tumor_prob"])
        gt = as_labelmap(read_volume(row["gt"])) if row.get("gt") else None
        report = _strip_voxels(build_lesion_report(case, seg, tumor_prob, gt))
        return {"case": case, "lesions": report, "error": None}
    except Exception as exc:
        return {"case": case, "error": str(exc)}


def cmd_uncertainty(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    rows = _read_manifest(args.manifest, ("seg", "tumor_prob"))
    jobs = int(_resolve(args, config, "jobs"))
    results = _map_cases(rows, _uncertainty_worker, {}, jobs)
    lesion_reports = [r["lesions"] for r in results if not r.get("error")]
    reports.write_lesions_csv(out_dir / "lesions.csv", lesion_reports)
    reports.write_lesions_json(out_dir / "lesions.json", lesion_reports)
    return _finish_batch(out_dir, results)


# -- bbox -----------------------------------------------------------------------

def cmd_bbox(args) -> int:
    out_dir = Path(args.out)
    rows = _read_manifest(args.manifest, ("seg",))
    table = []
    errors = []
    for row in rows:
        try:
            seg = as_labelmap(read_volume(row["seg"]))
            for target in ("tumor_lesions", "overall_liver"):
                for i, box in enumerate(component_bboxes(seg, target), start=1):
                    ev, em = box.extent_voxels, box.extent_mm
                    table.append(
                        {
                            "case": row["case"],
                            "target": target,
                            "component": i,
                            "extent_x_vox": ev[0],
                            "extent_y_vox": ev[1],
                            "extent_z_vox": ev[2],
                            "extent_x_mm": em[0],
                            "extent_y_mm": em[1],
                            "extent_z_mm": em[2],
                        }
                    )
        except Exception as exc:
            errors.append({"case": row["case"], "error": str(exc)})
    reports.write_bbox_csv(out_dir / "bbox.csv", table)
    if errors:
        reports.write_json(out_dir / "errors.json", errors)
        return 1
    return 0


# -- plan-folds ------------------------------------------------------------------

def cmd_plan_folds(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    cases = []
    with open(args.cases, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"case", "phase"} <= set(reader.fieldnames or ()):
            raise CliError(f"case list {args.cases} needs 'case' and 'phase' columns")
        for row in reader:
            cases.append(CaseRecord(case_id=row["case"].strip(), phase=row["phase"].strip()))
    k = int(_resolve(args, config, "k"))
    val_fraction = float(_resolve(args, config, "val_fraction"))
    seed = int(_resolve(args, config, "seed"))
    folds = stratified_kfold(cases, k, val_fraction, seed)
    reports.write_folds_json(out_dir / "folds.json", folds, k, seed, val_fraction)
    reports.write_folds_csv(out_dir / "folds.csv", folds)
    return 0


# -- compare ---------------------------------------------------------------------

def _paired_values(metrics_by_case_a, metrics_by_case_b, metric: str):
    xs, ys, dropped = [], [], 0
    for case in sorted(metrics_by_case_a):
        a, b = metrics_by_case_a[case], metrics_by_case_b[case]
        if metric == "tumor_burden_abs_error":
            defined = all(
                v is not None
                for v in (a.tumor_burden_pred, a.tumor_burden_gt, b.tumor_burden_pred, b.tumor_burden_gt)
            )
            if not defined:
                dropped += 1
                continue
            xs.append(abs(a.tumor_burden_pred - a.tumor_burden_gt))
            ys.append(abs(b.tumor_burden_pred - b.tumor_burden_gt))
        else:
            va, vb = a.value(metric), b.value(metric)
            if va is None or vb is None:
                dropped += 1
                continue
            xs.append(va)
            ys.append(vb)
    return xs, ys, dropped


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    alpha = float(_resolve(args, config, "alpha"))
    a = {m.case_id: m for m in reports.read_metrics_csv(args.metrics_a)}
    b = {m.case_id: m for m in reports.read_metrics_csv(args.metrics_b)}
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise CliError(f"case ids differ between the two CSVs (A-only {only_a}, B-only {only_b})")

    if args.hypothesis:
        hypotheses = {}
        for item in args.hypothesis:
            if "=" not in item:
                raise CliError(f"--hypothesis needs METRIC=greater|less, got {item!r}")
            metric, _, direction = item.partition("=")
            if metric not in DEFAULT_HYPOTHESES:
                raise CliError(f"unknown metric {metric!r} (known: {sorted(DEFAULT_HYPOTHESES)})")
            if direction not in ("greater", "less"):
                raise CliError(f"direction for {metric} must be greater or less, got {direction!r}")
            hypotheses[metric] = direction
    else:
        hypotheses = dict(DEFAULT_HYPOTHESES)

    results = []
    for metric, direction in hypotheses.items():
        xs, ys, dropped = _paired_values(a, b, metric)
        if len(xs) < 3:
            raise CliError(
                f"metric {metric}: only {len(xs)} defined pairs ({dropped} dropped); need >= 3"
            )
        sample = PairedSample(metric=metric, values_a=xs, values_b=ys, direction=direction)
        results.append(run_significance_protocol(sample, alpha))
    reports.write_significance_csv(out_dir / "significance.csv", results)
    reports.write_significance_json(out_dir / "significance.json", results)
    return 0


# -- parser -----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags win")
    p.add_argument("--jobs", type=int, help="parallel case workers (default 1)")


def _add_postproc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["multiclass", "dual-binary", "dual_binary"])
    p.add_argument("--connectivity", choices=["6", "26"], help="component connectivity")
    p.add_argument("--hole-connectivity", dest="hole_connectivity", choices=["6", "26"])
    p.add_argument("--dilate-element", dest="dilate_element", choices=["6", "26"])
    p.add_argument("--dilate-iters", dest="dilate_iterations", type=int)
    p.add_argument("--close-element", dest="close_element", choices=["6", "26"])
    p.add_argument("--close-iters", dest="close_iterations", type=int)
    p.add_argument("--skip-liver-step", dest="skip_liver_step", action="store_true", default=None)
    p.add_argument("--skip-lesion-filter", dest="skip_lesion_filter", action="store_true", default=None)
    p.add_argument("--skip-closing", dest="skip_closing", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liverseg",
        description="Post-process, fuse, score and analyze 3-class liver/tumor segmentations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="probabilities -> segmentation -> reports")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="binary-pipeline threshold (default 0.5)")
    p.add_argument("--tau-mm", dest="tau_mm", type=float, help="surface-dice tolerance in mm")
    p.add_argument("--hd-percentile", dest="hd_percentile", type=float)
    p.add_argument("--seed", type=int)
    _add_postproc_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau-mm", dest="tau_mm", type=float)
    p.add_argument("--hd-percentile", dest="hd_percentile", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("postprocess", help="3-step cleanup of existing label maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_postproc_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("fuse", help="fuse liver and tumor binary masks into a 3-class map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("uncertainty", help="per-lesion uncertainty (and TP/FP vs ground truth)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("bbox", help="bounding-box report for lesions and liver")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_bbox)

    p = sub.add_parser("plan-folds", help="stratified k-fold split of a case list")
    p.add_argument("--cases", required=True, help="CSV with 'case' and 'phase' columns")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_plan_folds)

    p = sub.add_parser("compare", help="significance analysis between two metric CSVs")
    p.add_argument("metrics_a")
    p.add_argument("metrics_b")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument(
        "--hypothesis",
        action="append",
        help="METRIC=greater|less (A vs B); repeatable; replaces the default set",
    )
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, ValueError) as exc:
        print(f"liverseg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
