"""Spacing-aware 3-D binary morphology primitives.

All operations act on the voxel lattice (spacing plays no role here; it only
matters downstream when distances and volumes are computed) and treat voxels
outside the grid as background.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage as ndi

from .volume import BinaryMask


class Connectivity(Enum):
    """Voxel neighbourhood: FACE = 6 neighbours, FULL = 26."""

    FACE = 6
    FULL = 26

    def structure(self) -> np.ndarray:
        rank = 1 if self is Connectivity.FACE else 3
        return ndi.generate_binary_structure(3, rank)

    @staticmethod
    def parse(text: str) -> "Connectivity":
        try:
            return {"6": Connectivity.FACE, "26": Connectivity.FULL}[str(text)]
        except KeyError:
            raise ValueError(f"connectivity must be 6 or 26, got {text!r}") from None


MORPH_OPS = ("dilate", "erode", "close")


@dataclass
class ComponentLabeling:
    """Connected components of a binary mask.

    Component ids are 1..count, assigned in ascending order of each
    component's first voxel in linear (C-order) scan order of the array.
    """

    labels: np.ndarray  # int32 per voxel, 0 = background
    count: int
    sizes: np.ndarray  # sizes[i] = voxel count of component i+1

    def mask(self, component_id: int) -> np.ndarray:
        if not 1 <= component_id <= self.count:
            raise ValueError(f"component id {component_id} out of 1..{self.count}")
        return self.labels == component_id

    def voxels(self, component_id: int) -> np.ndarray:
        """(N, 3) voxel indices of one component."""
        return np.argwhere(self.mask(component_id))


def _mask_data(m) -> np.ndarray:
    if isinstance(m, BinaryMask):
        return m.data
    data = np.asarray(m)
    if data.dtype != np.bool_:
        data = data.astype(bool)
    return data


def _wrap_like(data: np.ndarray, template) -> BinaryMask | np.ndarray:
    if isinstance(template, BinaryMask):
        return BinaryMask(data, template.spacing, template.orientation)
    return data


def label_components(m, c: Connectivity = Connectivity.FULL) -> ComponentLabeling:
    """Label maximal connected foreground sets under the given neighbourhood."""
    data = _mask_data(m)
    labels, count = ndi.label(data, structure=c.structure())
    labels = labels.astype(np.int32, copy=False)
    if count == 0:
        return ComponentLabeling(labels=labels, count=0, sizes=np.zeros(0, dtype=np.int64))
    # Re-number by first occurrence in C-order scan so ids are deterministic
    # regardless of the labelling backend.
    flat = labels.ravel()
    foreground = np.flatnonzero(flat)
    first = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[foreground], foreground)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    labels = remap[labels]
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:].astype(np.int64)
    return ComponentLabeling(labels=labels, count=count, sizes=sizes)


def keep_largest_component(m, c: Connectivity = Connectivity.FULL):
    """Zero all foreground except the largest component (first-in-scan on ties)."""
    data = _mask_data(m)
    comp = label_components(data, c)
    if comp.count == 0:
        return _wrap_like(np.zeros_like(data), m)
    keep = int(np.argmax(comp.sizes)) + 1  # argmax → lowest id on ties
    return _wrap_like(comp.labels == keep, m)


def fill_holes(m, c_background: Connectivity = Connectivity.FACE):
    """Fill background not reachable from the volume border.

    A background voxel becomes foreground unless a path of background voxels
    under ``c_background`` connects it to the grid border.
    """
    data = _mask_data(m)
    filled = ndi.binary_fill_holes(data, structure=c_background.structure())
    return _wrap_like(filled, m)


def binary_morph(m, op: str, elem: Connectivity = Connectivity.FULL, iterations: int = 1):
    """Dilate, erode, or close with the 3x3x3 element of the given connectivity.

    Close is the true composition dilate-then-erode computed on an unbounded
    background extension of the grid (then cropped back), which keeps closing
    extensive even at the grid border; plain dilate/erode treat outside
    voxels as background directly.
    """
    if op not in MORPH_OPS:
        raise ValueError(f"op must be one of {MORPH_OPS}, got {op!r}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    data = _mask_data(m)
    structure = elem.structure()
    if op == "dilate":
        out = ndi.binary_dilation(data, structure=structure, iterations=iterations)
    elif op == "erode":
        out = ndi.binary_erosion(
            data, structure=structure, iterations=iterations, border_value=0
        )
    else:
        pad = iterations
        padded = np.pad(data, pad, mode="constant", constant_values=False)
        padded = ndi.binary_dilation(padded, structure=structure, iterations=iterations)
        padded = ndi.binary_erosion(
            padded, structure=structure, iterations=iterations, border_value=0
        )
        out = padded[pad:-pad, pad:-pad, pad:-pad]
    return _wrap_like(out, m)


def extract_boundary(m):
    """Foreground voxels with a background 6-neighbour (grid edge counts)."""
    data = _mask_data(m)
    interior = ndi.binary_erosion(
        data, structure=Connectivity.FACE.structure(), border_value=0
    )
    return _wrap_like(data & ~interior, m)
