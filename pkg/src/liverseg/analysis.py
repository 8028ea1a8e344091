"""Dataset-planning utilities: bounding boxes, patch grids, fold splits.

These support choosing patch sizes from lesion/liver extents, tiling a
volume into patches whose probabilities are later averaged back together,
and building phase-stratified cross-validation folds.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .morphology import Connectivity, label_components
from .volume import LabelMap, Spacing

PHASES = ("arterial", "delayed", "non-contrast", "portal", "unknown")


@dataclass(frozen=True)
class BBox:
    """Inclusive voxel-index bounds of one component."""

    mins: tuple[int, int, int]
    maxs: tuple[int, int, int]
    spacing: Spacing

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.mins, self.maxs)):
            raise ValueError(f"bbox min {self.mins} exceeds max {self.maxs}")

    @property
    def extent_voxels(self) -> tuple[int, int, int]:
        return tuple(hi - lo + 1 for lo, hi in zip(self.mins, self.maxs))

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        return tuple(
            e * s for e, s in zip(self.extent_voxels, self.spacing.as_tuple())
        )

    def fits(self, size: tuple[int, int, int]) -> bool:
        return all(e <= s for e, s in zip(self.extent_voxels, size))


@dataclass(frozen=True)
class PatchSpec:
    """Patch size per axis in voxels, with an overlap fraction in [0,1)."""

    size: tuple[int, int, int]
    overlap: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if any(s < 1 for s in self.size):
            raise ValueError(f"patch size must be >= 1 per axis, got {self.size}")
        if any(not 0.0 <= o < 1.0 for o in self.overlap):
            raise ValueError(f"overlap fractions must lie in [0,1), got {self.overlap}")

    @property
    def strides(self) -> tuple[int, int, int]:
        return tuple(
            max(1, math.ceil(s * (1.0 - o))) for s, o in zip(self.size, self.overlap)
        )


@dataclass(frozen=True)
class CaseRecord:
    """A subject id with its CE-MRI phase label."""

    case_id: str
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")


def component_bboxes(
    seg: LabelMap, target: str, c: Connectivity = Connectivity.FULL
) -> list[BBox]:
    """Bounding boxes of the tumor lesions, or of the overall liver.

    ``target="tumor_lesions"`` yields one box per class-2 component,
    ``"overall_liver"`` one box around the classes-{1,2} mask.
    """
    if target == "tumor_lesions":
        comp = label_components(seg.data == 2, c)
        boxes = []
        for slices in ndi.find_objects(comp.labels):
            if slices is None:
                continue
            boxes.append(
                BBox(
                    mins=tuple(sl.start for sl in slices),
                    maxs=tuple(sl.stop - 1 for sl in slices),
                    spacing=seg.spacing,
                )
            )
        return boxes
    if target == "overall_liver":
        mask = (seg.data >= 1).astype(np.uint8)
        objs = ndi.find_objects(mask, max_label=1)
        if not objs or objs[0] is None:
            return []
        slices = objs[0]
        return [
            BBox(
                mins=tuple(sl.start for sl in slices),
                maxs=tuple(sl.stop - 1 for sl in slices),
                spacing=seg.spacing,
            )
        ]
    raise ValueError(f"target must be 'tumor_lesions' or 'overall_liver', got {target!r}")


def patch_coverage(bboxes: list[BBox], p: PatchSpec) -> float:
    """Fraction of boxes that fit inside the patch on every axis."""
    if not bboxes:
        return 1.0
    return sum(1 for b in bboxes if b.fits(p.size)) / len(bboxes)


def plan_patch_grid(shape: tuple[int, int, int], p: PatchSpec) -> list[tuple[int, int, int]]:
    """Patch origins covering the whole volume.

    Origins advance by ceil(size*(1-overlap)) per axis; the final patch is
    clamped to end at the volume edge. Axes shorter than the patch get a
    single origin at 0 with the patch clamped to the volume (no padding).
    """
    axes: list[list[int]] = []
    for n, size, stride in zip(shape, p.size, p.strides):
        if size >= n:
            axes.append([0])
            continue
        origins = list(range(0, n - size, stride))
        origins.append(n - size)
        axes.append(origins)
    return [(x, y, z) for x in axes[0] for y in axes[1] for z in axes[2]]


def aggregate_patch_probabilities(
    patches: list[tuple[tuple[int, int, int], np.ndarray]],
    shape: tuple[int, int, int],
) -> np.ndarray:
    """Mean of all patch fragments covering each voxel, per channel.

    Fragments are (origin, array) pairs; arrays may be 3-D or channel-last
    4-D and must agree on channel count. Every voxel must be covered.
    """
    if not patches:
        raise ValueError("no patch fragments given")
    first = np.asarray(patches[0][1])
    channels = first.shape[3] if first.ndim == 4 else 1
    total = np.zeros((*shape, channels), dtype=np.float64)
    cover = np.zeros(shape, dtype=np.int32)
    for origin, fragment in patches:
        fragment = np.asarray(fragment, dtype=np.float64)
        if fragment.ndim == 3:
            fragment = fragment[..., np.newaxis]
        if fragment.ndim != 4 or fragment.shape[3] != channels:
            raise ValueError("patch fragments must share one channel count")
        ends = tuple(o + s for o, s in zip(origin, fragment.shape[:3]))
        if any(o < 0 for o in origin) or any(e > n for e, n in zip(ends, shape)):
            raise ValueError(f"fragment at {origin} with shape {fragment.shape[:3]} exceeds {shape}")
        region = tuple(slice(o, e) for o, e in zip(origin, ends))
        total[region] += fragment
        cover[region] += 1
    if (cover == 0).any():
        raise ValueError("aggregation would leave uncovered voxels")
    mean = total / cover[..., np.newaxis]
    out = mean.astype(np.float32)
    return out[..., 0] if channels == 1 else out


def _bounded_quota(
    targets: list[float], lows: list[int], highs: list[int], total: int
) -> list[int]:
    """Integers within [low, high] per entry, summing to ``total``, as close
    to the real-valued targets as possible (largest-remainder style)."""
    quota = [min(max(int(math.floor(t)), lo), hi) for t, lo, hi in zip(targets, lows, highs)]
    # Adjust the entries whose rounding error is largest until the sum fits.
    while sum(quota) < total:
        best, best_gap = None, -math.inf
        for i, (q, t, hi) in enumerate(zip(quota, targets, highs)):
            if q < hi and t - q > best_gap:
                best, best_gap = i, t - q
        if best is None:
            raise ValueError("infeasible stratified quota (sum too low)")
        quota[best] += 1
    while sum(quota) > total:
        best, best_gap = None, -math.inf
        for i, (q, t, lo) in enumerate(zip(quota, targets, lows)):
            if q > lo and q - t > best_gap:
                best, best_gap = i, q - t
        if best is None:
            raise ValueError("infeasible stratified quota (sum too high)")
        quota[best] -= 1
    return quota


def stratified_kfold(
    cases: list[CaseRecord], k: int, val_fraction: float, seed: int
) -> list[dict[str, list[str]]]:
    """Phase-stratified k-fold split with train/val/test per fold.

    Test sets partition the cases (each case tests exactly once); within
    each fold the remaining cases are split into val/train so that every
    split's phase counts stay within one case of global proportionality.
    Deterministic for a fixed seed and case set.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(cases) < k:
        raise ValueError(f"need at least k={k} cases, got {len(cases)}")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in [0,1), got {val_fraction}")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("case ids must be unique")

    n = len(cases)
    rng = random.Random(seed)
    by_phase: dict[str, list[str]] = {}
    for c in cases:
        by_phase.setdefault(c.phase, []).append(c.case_id)
    # Rarest phase first; ties broken by name for determinism.
    phase_order = sorted(by_phase, key=lambda p: (len(by_phase[p]), p))

    # Round-robin test assignment with a cumulative fold offset, so the
    # remainders of successive phases land on different folds.
    test_sets: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    shuffled: dict[str, list[str]] = {}
    for phase in phase_order:
        members = sorted(by_phase[phase])
        rng.shuffle(members)
        shuffled[phase] = members
        for j, cid in enumerate(members):
            test_sets[(offset + j) % k].append(cid)
        offset = (offset + len(members)) % k

    folds = []
    global_counts = {p: len(by_phase[p]) for p in phase_order}
    for f in range(k):
        test = sorted(test_sets[f])
        test_lookup = set(test)
        pool = {p: [cid for cid in shuffled[p] if cid not in test_lookup] for p in phase_order}
        pool_total = n - len(test)
        val_size = int(round(val_fraction * pool_total))
        train_size = pool_total - val_size

        targets, lows, highs = [], [], []
        for p in phase_order:
            c_p = global_counts[p]
            avail = len(pool[p])
            t_val = c_p * val_size / n
            t_train = c_p * train_size / n
            lo = max(0, math.ceil(t_val - 1.0), math.ceil(avail - t_train - 1.0))
            hi = min(avail, math.floor(t_val + 1.0), math.floor(avail - t_train + 1.0))
            if lo > hi:  # fall back to the val-side window alone
                lo = max(0, math.ceil(t_val - 1.0))
                hi = min(avail, math.floor(t_val + 1.0))
            targets.append(t_val)
            lows.append(lo)
            highs.append(hi)
        quotas = _bounded_quota(targets, lows, highs, val_size)

        val: list[str] = []
        train: list[str] = []
        for p, q in zip(phase_order, quotas):
            members = list(pool[p])
            rng.shuffle(members)
            val.extend(members[:q])
            train.extend(members[q:])
        folds.append({"train": sorted(train), "val": sorted(val), "test": test})
    return folds
