"""From model probabilities to final 3-class segmentations.

Two pipelines produce a raw 3-class map — argmax over a 3-channel
probability stack, or thresholding two binary-model outputs and fusing
them — which then goes through the same 3-step post-processing: keep the
largest overall-liver component and fill its holes, drop tumor lesions with
no liver contact, and smooth the remaining lesions with a binary closing.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage as ndi

from .morphology import Connectivity, binary_morph, fill_holes, keep_largest_component, label_components
from .volume import BACKGROUND, LIVER, TUMOR, BinaryMask, LabelMap, ProbMap, Volume


class PipelineMode(Enum):
    MULTICLASS = "multiclass"
    DUAL_BINARY = "dual_binary"

    @staticmethod
    def parse(text: str) -> "PipelineMode":
        normalized = str(text).replace("-", "_").lower()
        for mode in PipelineMode:
            if mode.value == normalized:
                return mode
        raise ValueError(f"unknown pipeline mode {text!r}")


@dataclass
class PostprocessConfig:
    """Knobs for the 3-step post-processing; defaults follow the toolkit's
    standard choices (26-connected foreground, 6-connected hole flood,
    3x3x3 element with one iteration for both dilation and closing)."""

    connectivity: Connectivity = Connectivity.FULL
    hole_connectivity: Connectivity = Connectivity.FACE
    dilate_element: Connectivity = Connectivity.FULL
    dilate_iterations: int = 1
    close_element: Connectivity = Connectivity.FULL
    close_iterations: int = 1
    keep_liver_component: bool = True  # step 1
    filter_tumors: bool = True  # step 2
    close_tumors: bool = True  # step 3

    def __post_init__(self):
        if self.filter_tumors and self.dilate_iterations < 1:
            raise ValueError("dilate_iterations must be >= 1 when step 2 is enabled")
        if self.close_tumors and self.close_iterations < 1:
            raise ValueError("close_iterations must be >= 1 when step 3 is enabled")


def argmax_labelization(p: ProbMap) -> LabelMap:
    """Per-voxel class of maximal probability; ties go to the higher class."""
    if p.channels != 3:
        raise ValueError(f"argmax labelization needs 3 channels, got {p.channels}")
    # argmax on reversed channels picks the highest class among ties.
    flipped = p.data[..., ::-1]
    labels = (2 - np.argmax(flipped, axis=3)).astype(np.uint8)
    return LabelMap(labels, p.spacing, p.orientation)


def threshold_binary(p: Volume, t: float = 0.5) -> BinaryMask:
    """Foreground where probability >= t."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {t}")
    if p.data.dtype.kind != "f":
        raise ValueError(f"expected a probability volume, got dtype {p.data.dtype}")
    return BinaryMask(p.data >= t, p.spacing, p.orientation)


def fuse_dual_binary(liver: BinaryMask, tumor: BinaryMask) -> LabelMap:
    """Aggregate the two binary masks into one 3-class map.

    Tumor only counts inside the liver mask (liver*tumor); tumor voxels
    outside the liver become background.
    """
    liver.require_same_grid(tumor, "liver and tumor masks")
    labels = np.where(
        liver.data,
        np.where(tumor.data, np.uint8(TUMOR), np.uint8(LIVER)),
        np.uint8(BACKGROUND),
    ).astype(np.uint8)
    return LabelMap(labels, liver.spacing, liver.orientation)


def _expand_slices(slices, margin: int, shape) -> tuple[slice, ...]:
    return tuple(
        slice(max(0, sl.start - margin), min(n, sl.stop + margin))
        for sl, n in zip(slices, shape)
    )


def _filter_lesions_multiclass(out: np.ndarray, tumor: np.ndarray, cfg: PostprocessConfig) -> np.ndarray:
    """Delete tumor components whose dilation misses every class-1 voxel."""
    comp = label_components(tumor, cfg.connectivity)
    if comp.count == 0:
        return tumor
    liver_only = out == LIVER
    structure = cfg.dilate_element.structure()
    objects = ndi.find_objects(comp.labels)
    for cid, slices in enumerate(objects, start=1):
        if slices is None:
            continue
        region = _expand_slices(slices, cfg.dilate_iterations, tumor.shape)
        local = comp.labels[region] == cid
        dilated = ndi.binary_dilation(local, structure=structure, iterations=cfg.dilate_iterations)
        if not (dilated & liver_only[region]).any():
            tumor[region] &= ~local
            out[region][local] = BACKGROUND
    return tumor


def _close_lesions(out: np.ndarray, tumor: np.ndarray, cfg: PostprocessConfig) -> np.ndarray:
    """Close the tumor mask; voxels gained by closing turn to class 2 only
    inside the current overall-liver mask."""
    if not tumor.any():
        return tumor
    objs = ndi.find_objects(tumor.astype(np.uint8), max_label=1)
    region = _expand_slices(objs[0], 2 * cfg.close_iterations, tumor.shape)
    closed_local = binary_morph(
        tumor[region], "close", cfg.close_element, cfg.close_iterations
    )
    closed = tumor.copy()
    closed[region] |= closed_local
    added = closed & ~tumor & (out > 0)
    out[added] = TUMOR
    return tumor | added


def postprocess(seg: LabelMap, mode: PipelineMode, cfg: PostprocessConfig | None = None) -> LabelMap:
    """The shared 3-step cleanup of a raw 3-class segmentation.

    1. Keep the largest overall-liver (classes 1+2) component and fill its
       holes; filled voxels become healthy liver, voxels of discarded
       components (tumor included) become background.
    2. Multiclass: dilate each tumor lesion and delete it if the dilation
       touches no healthy-liver voxel. Dual-binary: re-assert tumor ⊆ liver
       (already guaranteed by fusion).
    3. Close the remaining tumor mask; closing may only add tumor inside
       the overall-liver mask.
    """
    if cfg is None:
        cfg = PostprocessConfig()
    labels = seg.data
    overall = labels > 0

    if cfg.keep_liver_component:
        overall = keep_largest_component(overall, cfg.connectivity)
        overall = fill_holes(overall, cfg.hole_connectivity)
    tumor = (labels == TUMOR) & overall

    out = np.where(overall, np.uint8(LIVER), np.uint8(BACKGROUND))
    out[tumor] = TUMOR

    if cfg.filter_tumors:
        if mode is PipelineMode.MULTICLASS:
            tumor = _filter_lesions_multiclass(out, tumor, cfg)
        else:
            inside = tumor & (out > 0)
            out[tumor & ~inside] = BACKGROUND
            tumor = inside

    if cfg.close_tumors:
        tumor = _close_lesions(out, tumor, cfg)

    return LabelMap(out, seg.spacing, seg.orientation)


def run_pipeline(
    mode: PipelineMode,
    cfg: PostprocessConfig | None = None,
    probs: ProbMap | None = None,
    liver_prob: Volume | None = None,
    tumor_prob: Volume | None = None,
    threshold: float = 0.5,
) -> LabelMap:
    """Full pipeline: labelize (per mode), then post-process.

    Multiclass takes one 3-channel ``probs`` stack; dual-binary takes the
    two foreground probability volumes ``liver_prob`` and ``tumor_prob``.
    """
    if mode is PipelineMode.MULTICLASS:
        if probs is None or liver_prob is not None or tumor_prob is not None:
            raise ValueError("multiclass mode takes exactly one 3-channel probability stack")
        raw = argmax_labelization(probs)
    else:
        if probs is not None or liver_prob is None or tumor_prob is None:
            raise ValueError("dual-binary mode takes liver and tumor probability volumes")
        liver_prob.require_same_grid(tumor_prob, "liver and tumor probabilities")
        liver_mask = threshold_binary(liver_prob, threshold)
        tumor_mask = threshold_binary(tumor_prob, threshold)
        raw = fuse_dual_binary(liver_mask, tumor_mask)
    return postprocess(raw, mode, cfg)
