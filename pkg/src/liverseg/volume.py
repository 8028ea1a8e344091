"""Volume data model: scalar grids with physical spacing.

All per-voxel quantities in the toolkit ride on these carriers. Arrays are
indexed ``(x, y, z)`` and treated as immutable after construction; no
resampling or reorientation is ever performed — inputs for one case must
share shape and spacing, and mismatches are refused rather than repaired.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nifti
from .nifti import NiftiError, OrientationInfo

_LABEL_SET = frozenset((0, 1, 2))
BACKGROUND, LIVER, TUMOR = 0, 1, 2


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in millimetres along each axis."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"spacing {name}={v!r} must be a positive real")

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.dx), float(self.dy), float(self.dz))

    def isclose(self, other: "Spacing", rtol: float = 1e-6) -> bool:
        return all(
            math.isclose(a, b, rel_tol=rtol)
            for a, b in zip(self.as_tuple(), other.as_tuple())
        )


def voxel_volume_mm3(s: Spacing) -> float:
    """Physical volume of one voxel: dx*dy*dz."""
    return float(s.dx) * float(s.dy) * float(s.dz)


class Volume:
    """A 3-D scalar grid (labels or probabilities) with spacing metadata."""

    def __init__(
        self,
        data: np.ndarray,
        spacing: Spacing,
        orientation: OrientationInfo | None = None,
    ):
        data = np.asarray(data)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got {data.ndim}-D")
        if any(n < 1 for n in data.shape):
            raise ValueError(f"volume shape {data.shape} has an empty axis")
        view = data.view()
        view.flags.writeable = False
        self.data = view
        self.spacing = spacing
        self.orientation = orientation

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def same_grid(self, other: "Volume") -> bool:
        return self.shape == other.shape and self.spacing.isclose(other.spacing)

    def require_same_grid(self, other: "Volume", what: str = "volumes") -> None:
        if not self.same_grid(other):
            raise ValueError(
                f"{what} do not share a grid: "
                f"{self.shape}@{self.spacing.as_tuple()} vs "
                f"{other.shape}@{other.spacing.as_tuple()}"
            )


class LabelMap(Volume):
    """Volume of class labels: 0 background, 1 healthy liver, 2 tumor."""

    def __init__(self, data, spacing, orientation=None):
        data = np.asarray(data)
        if data.dtype.kind not in "uib":
            raise ValueError(f"label data must be integer, got {data.dtype}")
        values = np.unique(data)
        bad = set(int(v) for v in values) - _LABEL_SET
        if bad:
            raise ValueError(f"label values outside {{0,1,2}}: {sorted(bad)}")
        super().__init__(data.astype(np.uint8, copy=False), spacing, orientation)


class BinaryMask(Volume):
    """Volume restricted to {0,1}; stored as booleans."""

    def __init__(self, data, spacing, orientation=None):
        data = np.asarray(data)
        if data.dtype != np.bool_:
            values = np.unique(data)
            if not np.isin(values, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
            data = data.astype(bool)
        super().__init__(data, spacing, orientation)

    def count(self) -> int:
        return int(self.data.sum())


class ProbMap:
    """Stack of per-class probability volumes sharing one grid.

    Channels are stored last: ``data[x, y, z, c]`` in float32. For 3-channel
    maps (background, liver, tumor) the per-voxel channel sum must be within
    1e-4 of one.
    """

    SUM_TOL = 1e-4
    _RANGE_TOL = 1e-5

    def __init__(
        self,
        data: np.ndarray,
        spacing: Spacing,
        orientation: OrientationInfo | None = None,
    ):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 4:
            raise ValueError(f"probability stack must be 4-D, got {data.ndim}-D")
        channels = data.shape[3]
        if channels not in (2, 3):
            raise ValueError(f"probability stack needs 2 or 3 channels, got {channels}")
        lo, hi = float(data.min()), float(data.max())
        if lo < -self._RANGE_TOL or hi > 1.0 + self._RANGE_TOL:
            raise ValueError(f"probabilities outside [0,1]: min={lo}, max={hi}")
        data = np.clip(data, 0.0, 1.0)
        if channels == 3:
            sums = data.sum(axis=3, dtype=np.float64)
            err = float(np.abs(sums - 1.0).max())
            if err > self.SUM_TOL:
                raise ValueError(
                    f"3-channel probabilities must sum to 1 per voxel "
                    f"(worst deviation {err:.2e})"
                )
        view = data.view()
        view.flags.writeable = False
        self.data = view
        self.spacing = spacing
        self.orientation = orientation

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def channel(self, index: int) -> Volume:
        """One class's probability volume (shares memory with the stack)."""
        return Volume(self.data[..., index], self.spacing, self.orientation)

    @staticmethod
    def from_channels(volumes: list[Volume]) -> "ProbMap":
        if not volumes:
            raise ValueError("no channels given")
        first = volumes[0]
        for v in volumes[1:]:
            first.require_same_grid(v, "probability channels")
        stack = np.stack([v.data for v in volumes], axis=-1)
        return ProbMap(stack, first.spacing, first.orientation)


def read_volume(path: str | Path) -> Volume:
    """Read one 3-D volume; spacing comes from the header pixel dimensions.

    Voxel values and order are taken as stored — no scaling, resampling or
    reorientation.
    """
    img = nifti.read(path)
    if img.data.ndim != 3:
        raise NiftiError(
            f"{path}: expected a 3-D volume, got shape {img.data.shape} "
            "(use read_probmap for multi-channel files)"
        )
    sp = Spacing(*img.spacing)
    return Volume(img.data, sp, img.orientation)


def read_probmap(path: str | Path) -> ProbMap:
    """Read a multi-channel probability volume from a 4-D file."""
    img = nifti.read(path)
    if img.data.ndim != 4:
        raise NiftiError(f"{path}: expected a 4-D probability stack")
    sp = Spacing(*img.spacing)
    return ProbMap(img.data, sp, img.orientation)


def _orientation_for(v) -> OrientationInfo:
    if v.orientation is not None:
        return v.orientation
    return OrientationInfo.default(v.spacing.as_tuple())


def write_volume(v: Volume, path: str | Path, compresslevel: int = 1) -> None:
    """Write a volume re-readable with identical shape, spacing and data.

    Labels and masks are stored as uint8, probabilities as float32 (the
    in-memory element kinds); other integer/float kinds are written as-is.
    """
    img = nifti.NiftiImage(
        data=v.data, spacing=v.spacing.as_tuple(), orientation=_orientation_for(v)
    )
    nifti.write(img, path, compresslevel=compresslevel)


def write_probmap(p: ProbMap, path: str | Path, compresslevel: int = 1) -> None:
    img = nifti.NiftiImage(
        data=p.data, spacing=p.spacing.as_tuple(), orientation=_orientation_for(p)
    )
    nifti.write(img, path, compresslevel=compresslevel)


def as_labelmap(v: Volume) -> LabelMap:
    """Validate a generic volume as a 3-class label map."""
    if isinstance(v, LabelMap):
        return v
    if v.data.dtype.kind == "f":
        rounded = np.rint(v.data)
        if not np.array_equal(rounded, v.data):
            raise ValueError("label volume contains non-integer values")
        return LabelMap(rounded.astype(np.uint8), v.spacing, v.orientation)
    return LabelMap(v.data, v.spacing, v.orientation)
