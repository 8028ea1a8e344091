"""Lesion extraction, per-lesion uncertainty, TP/FP status, and the
uncertainty-volume correlation.

The uncertainty score of a lesion is one minus the mean tumor probability
over its voxels, so confidently-segmented lesions score near 0 and doubtful
ones near 1. Against a ground truth, a predicted lesion is TP as soon as a
single voxel overlaps the reference tumor mask, else FP.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .morphology import Connectivity, label_components
from .volume import LabelMap, Spacing, Volume, voxel_volume_mm3

TP, FP, UNKNOWN = "TP", "FP", "unknown"


@dataclass
class Lesion:
    """One tumor connected component of a segmentation."""

    id: int
    voxel_count: int
    volume_mm3: float
    voxels: np.ndarray = field(repr=False, compare=False)  # (N, 3) indices
    uncertainty: float | None = None
    status: str = UNKNOWN


@dataclass
class LesionReport:
    """All lesions of one case plus the uncertainty-volume correlation."""

    case_id: str
    lesions: list[Lesion]
    spearman_uncertainty_volume: float | None = None


def extract_lesions(seg: LabelMap, c: Connectivity = Connectivity.FULL) -> list[Lesion]:
    """One lesion per connected component of the tumor (class-2) mask."""
    comp = label_components(seg.data == 2, c)
    vox_mm3 = voxel_volume_mm3(seg.spacing)
    lesions: list[Lesion] = []
    if comp.count == 0:
        return lesions
    coords = np.argwhere(comp.labels > 0)
    ids = comp.labels[tuple(coords.T)]
    order = np.argsort(ids, kind="stable")
    coords, ids = coords[order], ids[order]
    bounds = np.searchsorted(ids, np.arange(1, comp.count + 2))
    for cid in range(1, comp.count + 1):
        vox = coords[bounds[cid - 1] : bounds[cid]]
        lesions.append(
            Lesion(
                id=cid,
                voxel_count=len(vox),
                volume_mm3=len(vox) * vox_mm3,
                voxels=vox,
            )
        )
    return lesions


def lesion_uncertainty(lesion: Lesion, tumor_prob: Volume) -> float:
    """One minus the mean tumor probability over the lesion's voxels."""
    vox = lesion.voxels
    shape = tumor_prob.shape
    if (vox < 0).any() or (vox >= np.asarray(shape)).any():
        raise ValueError(f"lesion {lesion.id} has voxels outside the probability grid")
    probs = tumor_prob.data[tuple(vox.T)]
    return 1.0 - float(np.mean(probs, dtype=np.float64))


def score_lesions(lesions: list[Lesion], tumor_prob: Volume) -> list[Lesion]:
    """Copies of the lesions with their uncertainty filled in."""
    return [replace(l, uncertainty=lesion_uncertainty(l, tumor_prob)) for l in lesions]


def classify_lesions(pred_lesions: list[Lesion], gt: LabelMap) -> list[Lesion]:
    """TP iff a lesion intersects the reference tumor mask in >= 1 voxel."""
    gt_tumor = gt.data == 2
    out = []
    for lesion in pred_lesions:
        vox = lesion.voxels
        if (vox >= np.asarray(gt.shape)).any() or (vox < 0).any():
            raise ValueError(f"lesion {lesion.id} lies outside the ground-truth grid")
        hit = bool(gt_tumor[tuple(vox.T)].any())
        out.append(replace(lesion, status=TP if hit else FP))
    return out


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties receiving the average of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation: Pearson correlation of the average-rank vectors."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two equal-length 1-D samples")
    if len(x) < 2:
        raise ValueError("spearman needs at least 2 observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise ValueError("spearman undefined: a sample has zero rank variance")
    return float((rx * ry).sum() / denom)


def build_lesion_report(
    case_id: str,
    seg: LabelMap,
    tumor_prob: Volume,
    gt: LabelMap | None = None,
    c: Connectivity = Connectivity.FULL,
) -> LesionReport:
    """Extract, score, and (when ground truth is given) classify lesions."""
    seg.require_same_grid(tumor_prob, "segmentation and tumor probabilities")
    lesions = score_lesions(extract_lesions(seg, c), tumor_prob)
    if gt is not None:
        seg.require_same_grid(gt, "segmentation and ground truth")
        lesions = classify_lesions(lesions, gt)
    rho = None
    if len(lesions) >= 2:
        try:
            rho = spearman(
                [l.uncertainty for l in lesions], [l.volume_mm3 for l in lesions]
            )
        except ValueError:
            rho = None
    return LesionReport(case_id=case_id, lesions=lesions, spearman_uncertainty_volume=rho)
