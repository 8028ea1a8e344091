"""CSV/JSON serialization of the toolkit's reports.

All floats are written with six significant digits, None becomes an empty
CSV cell / JSON null, and row order is always sorted by case so reruns are
byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .metrics import AggregateReport, CaseMetrics
from .stats import SignificanceResult
from .uncertainty import LesionReport


def fmt_float(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".6g")


def round6(x):
    """Float with six significant digits (for JSON payloads)."""
    if x is None:
        return None
    return float(format(float(x), ".6g"))


def _jsonable(obj):
    if isinstance(obj, float):
        return round6(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def _open_csv(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


# -- case metrics -----------------------------------------------------------

_VALUE_COLUMNS = CaseMetrics.column_names()[1:]  # all but case_id


def write_metrics_csv(path: str | Path, cases: list[CaseMetrics]) -> None:
    header = ["case"] + _VALUE_COLUMNS + [f"{c}_defined" for c in _VALUE_COLUMNS]
    with _open_csv(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in sorted(cases, key=lambda c: c.case_id):
            values = [c.value(name) for name in _VALUE_COLUMNS]
            writer.writerow(
                [c.case_id]
                + [fmt_float(v) for v in values]
                + [str(v is not None).lower() for v in values]
            )


def read_metrics_csv(path: str | Path) -> list[CaseMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {"case_id": row["case"]}
            for name in _VALUE_COLUMNS:
                cell = row.get(name, "")
                kwargs[name] = float(cell) if cell not in ("", None) else None
            out.append(CaseMetrics(**kwargs))
    return out


def write_aggregate_json(path: str | Path, report: AggregateReport) -> None:
    write_json(path, report.to_dict())


# -- lesion reports ---------------------------------------------------------

def write_lesions_csv(path: str | Path, reports: list[LesionReport]) -> None:
    with _open_csv(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "lesion_id", "voxel_count", "volume_mm3", "uncertainty", "status"])
        for rep in sorted(reports, key=lambda r: r.case_id):
            for les in rep.lesions:
                writer.writerow(
                    [
                        rep.case_id,
                        les.id,
                        les.voxel_count,
                        fmt_float(les.volume_mm3),
                        fmt_float(les.uncertainty),
                        les.status,
                    ]
                )


def write_lesions_json(path: str | Path, reports: list[LesionReport]) -> None:
    payload = []
    for rep in sorted(reports, key=lambda r: r.case_id):
        payload.append(
            {
                "case": rep.case_id,
                "spearman_uncertainty_volume": rep.spearman_uncertainty_volume,
                "lesions": [
                    {
                        "id": les.id,
                        "voxel_count": les.voxel_count,
                        "volume_mm3": les.volume_mm3,
                        "uncertainty": les.uncertainty,
                        "status": les.status,
                    }
                    for les in rep.lesions
                ],
            }
        )
    write_json(path, payload)


# -- significance -----------------------------------------------------------

_SIGNIFICANCE_COLUMNS = (
    "metric",
    "n",
    "direction",
    "shapiro_w",
    "shapiro_p",
    "test",
    "p_value",
    "significant",
    "degenerate",
    "n_zero_diffs",
    "alpha",
)


def write_significance_csv(path: str | Path, results: list[SignificanceResult]) -> None:
    with _open_csv(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(_SIGNIFICANCE_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    r.metric,
                    r.n,
                    r.direction,
                    fmt_float(r.shapiro_w),
                    fmt_float(r.shapiro_p),
                    r.test,
                    fmt_float(r.p_value),
                    str(r.significant).lower(),
                    str(r.degenerate).lower(),
                    r.n_zero_diffs,
                    fmt_float(r.alpha),
                ]
            )


def write_significance_json(path: str | Path, results: list[SignificanceResult]) -> None:
    payload = [
        {
            "metric": r.metric,
            "n": r.n,
            "direction": r.direction,
            "shapiro_w": r.shapiro_w,
            "shapiro_p": r.shapiro_p,
            "test": r.test,
            "p_value": r.p_value,
            "significant": r.significant,
            "degenerate": r.degenerate,
            "n_zero_diffs": r.n_zero_diffs,
            "alpha": r.alpha,
        }
        for r in results
    ]
    write_json(path, payload)


# -- folds ------------------------------------------------------------------

def write_folds_json(path: str | Path, folds: list[dict], k: int, seed: int, val_fraction: float) -> None:
    payload = {
        "k": k,
        "seed": seed,
        "val_fraction": val_fraction,
        "folds": [
            {"fold": i + 1, "train": f["train"], "val": f["val"], "test": f["test"]}
            for i, f in enumerate(folds)
        ],
    }
    write_json(path, payload)


def write_folds_csv(path: str | Path, folds: list[dict]) -> None:
    with _open_csv(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "split", "case"])
        for i, f in enumerate(folds, start=1):
            for split in ("train", "val", "test"):
                for cid in f[split]:
                    writer.writerow([i, split, cid])


# -- bounding boxes ---------------------------------------------------------

def write_bbox_csv(path: str | Path, rows: list[dict]) -> None:
    header = [
        "case",
        "target",
        "component",
        "extent_x_vox",
        "extent_y_vox",
        "extent_z_vox",
        "extent_x_mm",
        "extent_y_mm",
        "extent_z_mm",
    ]
    with _open_csv(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[h] if not h.endswith("_mm") else fmt_float(row[h]) for h in header])
