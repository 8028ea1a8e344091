"""The nine challenge metrics and their aggregation.

Four overlap/surface metrics (Dice, Surface Dice, Hausdorff, ASSD) are
computed for the overall liver (classes 1+2) and for the tumors, plus the
tumor-burden ratio whose across-case RMSE is the ninth metric. Surface
distances are Euclidean distances in mm between boundary-voxel centers on
the anisotropic lattice, obtained from an exact separable distance
transform.

Empty-mask conventions: with both masks empty, overlap ratios are 1 and
distances 0; with exactly one empty, ratios are 0 and distances undefined.
Undefined values are carried as ``None`` and excluded (and counted) during
aggregation.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from math import sqrt

import numpy as np
from scipy import ndimage as ndi

from .morphology import extract_boundary
from .volume import BinaryMask, LabelMap

METRIC_NAMES = (
    "liver_dice",
    "liver_surface_dice",
    "liver_hausdorff_mm",
    "liver_assd_mm",
    "tumor_dice",
    "tumor_surface_dice",
    "tumor_hausdorff_mm",
    "tumor_assd_mm",
)

# Table-style report order within each structure.
_REPORT_ORDER = ("assd_mm", "dice", "hausdorff_mm", "surface_dice")


def overall_liver_mask(seg: LabelMap) -> BinaryMask:
    """Union of healthy-liver and tumor voxels (classes 1 and 2)."""
    return BinaryMask(seg.data >= 1, seg.spacing, seg.orientation)


def tumor_mask(seg: LabelMap) -> BinaryMask:
    return BinaryMask(seg.data == 2, seg.spacing, seg.orientation)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Overlap ratio 2|A∩B|/(|A|+|B|); 1.0 when both masks are empty."""
    a.require_same_grid(b, "masks")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        return 1.0
    inter = int(np.logical_and(a.data, b.data).sum())
    return 2.0 * inter / (na + nb)


def _crop_slices(union: np.ndarray) -> tuple[slice, slice, slice] | None:
    objs = ndi.find_objects(union.astype(np.uint8), max_label=1)
    if not objs or objs[0] is None:
        return None
    out = []
    for sl, n in zip(objs[0], union.shape):
        out.append(slice(max(0, sl.start - 1), min(n, sl.stop + 1)))
    return tuple(out)


def _boundary_distances(a: BinaryMask, b: BinaryMask) -> tuple[np.ndarray, np.ndarray]:
    """Distances in mm from each boundary voxel of one mask to the other's
    boundary, both directions. Both masks must be non-empty."""
    crop = _crop_slices(a.data | b.data)
    sub_a = a.data[crop]
    sub_b = b.data[crop]
    bnd_a = extract_boundary(sub_a)
    bnd_b = extract_boundary(sub_b)
    sampling = a.spacing.as_tuple()
    edt_to_b = ndi.distance_transform_edt(~bnd_b, sampling=sampling)
    edt_to_a = ndi.distance_transform_edt(~bnd_a, sampling=sampling)
    return edt_to_b[bnd_a], edt_to_a[bnd_b]


def surface_dice(a: BinaryMask, b: BinaryMask, tau_mm: float) -> float:
    """Fraction of boundary voxels lying within tau_mm of the other boundary."""
    a.require_same_grid(b, "masks")
    if tau_mm < 0:
        raise ValueError(f"tolerance must be >= 0, got {tau_mm}")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    d_ab, d_ba = _boundary_distances(a, b)
    hits = int((d_ab <= tau_mm).sum()) + int((d_ba <= tau_mm).sum())
    return hits / (d_ab.size + d_ba.size)


def hausdorff(a: BinaryMask, b: BinaryMask, percentile: float = 100.0) -> float | None:
    """Symmetric boundary-distance percentile in mm; None if one mask is empty."""
    a.require_same_grid(b, "masks")
    if not 0 <= percentile <= 100:
        raise ValueError(f"percentile must be in [0,100], got {percentile}")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return None
    d_ab, d_ba = _boundary_distances(a, b)
    return float(max(np.percentile(d_ab, percentile), np.percentile(d_ba, percentile)))


def assd(a: BinaryMask, b: BinaryMask) -> float | None:
    """Average symmetric surface distance in mm; None if one mask is empty."""
    a.require_same_grid(b, "masks")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return None
    d_ab, d_ba = _boundary_distances(a, b)
    return float((d_ab.sum() + d_ba.sum()) / (d_ab.size + d_ba.size))


def tumor_burden(seg: LabelMap) -> float | None:
    """Tumor volume over overall-liver volume; None for an empty liver."""
    n_tumor = int((seg.data == 2).sum())
    n_overall = int((seg.data >= 1).sum())
    if n_overall == 0:
        return None
    return n_tumor / n_overall


@dataclass
class CaseMetrics:
    """The challenge metrics for one subject; None marks undefined values."""

    case_id: str
    liver_dice: float
    liver_surface_dice: float
    liver_hausdorff_mm: float | None
    liver_assd_mm: float | None
    tumor_dice: float
    tumor_surface_dice: float
    tumor_hausdorff_mm: float | None
    tumor_assd_mm: float | None
    tumor_burden_pred: float | None
    tumor_burden_gt: float | None

    def value(self, metric: str) -> float | None:
        return getattr(self, metric)

    def defined(self, metric: str) -> bool:
        return getattr(self, metric) is not None

    @staticmethod
    def column_names() -> list[str]:
        return [f.name for f in fields(CaseMetrics)]


def evaluate_case(
    pred: LabelMap,
    gt: LabelMap,
    tau_mm: float = 2.0,
    percentile: float = 100.0,
    case_id: str = "",
) -> CaseMetrics:
    """All overlap/surface metrics on both structures plus both burdens."""
    pred.require_same_grid(gt, "prediction and ground truth")
    values: dict[str, float | None] = {}
    for name, select in (("liver", overall_liver_mask), ("tumor", tumor_mask)):
        mp, mg = select(pred), select(gt)
        values[f"{name}_dice"] = dice(mp, mg)
        values[f"{name}_surface_dice"] = surface_dice(mp, mg, tau_mm)
        values[f"{name}_hausdorff_mm"] = hausdorff(mp, mg, percentile)
        values[f"{name}_assd_mm"] = assd(mp, mg)
    return CaseMetrics(
        case_id=case_id,
        tumor_burden_pred=tumor_burden(pred),
        tumor_burden_gt=tumor_burden(gt),
        **values,
    )


def rmse_tumor_burden(cases: list[CaseMetrics]) -> float:
    """Root mean square error between predicted and reference burdens."""
    errors = [
        c.tumor_burden_pred - c.tumor_burden_gt
        for c in cases
        if c.tumor_burden_pred is not None and c.tumor_burden_gt is not None
    ]
    if not errors:
        raise ValueError("no cases with defined tumor burdens")
    return sqrt(sum(e * e for e in errors) / len(errors))


@dataclass
class MetricSummary:
    mean: float
    std: float
    n_used: int
    n_excluded: int


@dataclass
class AggregateReport:
    """Across-case mean ± standard deviation per metric, plus burden RMSE."""

    n_cases: int
    summaries: dict[str, MetricSummary]
    tumor_burden_rmse: float | None
    burden_cases_used: int

    def to_dict(self) -> dict:
        out: dict = {"n_cases": self.n_cases, "liver": {}, "tumor": {}}
        for structure in ("liver", "tumor"):
            for short in _REPORT_ORDER:
                name = f"{structure}_{short}"
                s = self.summaries[name]
                out[structure][short] = {
                    "mean": s.mean,
                    "std": s.std,
                    "n_used": s.n_used,
                    "n_excluded": s.n_excluded,
                }
        out["tumor_burden_rmse"] = self.tumor_burden_rmse
        out["burden_cases_used"] = self.burden_cases_used
        return out


def aggregate(cases: list[CaseMetrics], sample_std: bool = False) -> AggregateReport:
    """Mean ± (population by default) std over cases with defined values."""
    if not cases:
        raise ValueError("no cases to aggregate")
    summaries: dict[str, MetricSummary] = {}
    for name in METRIC_NAMES:
        vals = [c.value(name) for c in cases if c.defined(name)]
        n = len(vals)
        if n == 0:
            summaries[name] = MetricSummary(float("nan"), float("nan"), 0, len(cases))
            continue
        arr = np.asarray(vals, dtype=np.float64)
        ddof = 1 if (sample_std and n > 1) else 0
        summaries[name] = MetricSummary(
            mean=float(arr.mean()),
            std=float(arr.std(ddof=ddof)),
            n_used=n,
            n_excluded=len(cases) - n,
        )
    burden_used = sum(
        1
        for c in cases
        if c.tumor_burden_pred is not None and c.tumor_burden_gt is not None
    )
    rmse = rmse_tumor_burden(cases) if burden_used else None
    return AggregateReport(
        n_cases=len(cases),
        summaries=summaries,
        tumor_burden_rmse=rmse,
        burden_cases_used=burden_used,
    )
