"""Morphology primitives against hand enumerations and brute-force oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from liverseg.morphology import (
    Connectivity,
    binary_morph,
    extract_boundary,
    fill_holes,
    keep_largest_component,
    label_components,
)
from liverseg.volume import BinaryMask, Spacing

from oracles import brute_close, brute_components, brute_dilate, brute_erode, brute_fill_holes, brute_boundary

FACE, FULL = Connectivity.FACE, Connectivity.FULL


def small_masks(max_side=6):
    return arrays(
        dtype=np.bool_,
        shape=st.tuples(
            st.integers(1, max_side), st.integers(1, max_side), st.integers(1, max_side)
        ),
        elements=st.booleans(),
    )


# -- label_components ---------------------------------------------------------

def test_two_isolated_voxels():
    m = np.zeros((5, 5, 5), bool)
    m[0, 0, 0] = m[4, 4, 4] = True
    comp = label_components(m, FULL)
    assert comp.count == 2
    assert list(comp.sizes) == [1, 1]


def test_corner_touch_connectivity():
    # two voxels sharing only a cube corner
    m = np.zeros((4, 4, 4), bool)
    m[1, 1, 1] = m[2, 2, 2] = True
    assert label_components(m, FULL).count == 1
    assert label_components(m, FACE).count == 2


def test_empty_mask_has_no_components():
    comp = label_components(np.zeros((3, 3, 3), bool), FULL)
    assert comp.count == 0
    assert comp.labels.sum() == 0


def test_component_ids_follow_scan_order():
    m = np.zeros((4, 4, 4), bool)
    m[3, 3, 3] = True  # later in scan order
    m[0, 1, 0] = True  # earlier
    comp = label_components(m, FULL)
    assert comp.labels[0, 1, 0] == 1
    assert comp.labels[3, 3, 3] == 2


@settings(max_examples=60, deadline=None)
@given(small_masks(), st.sampled_from([FACE, FULL]))
def test_label_components_matches_bfs_oracle(mask, conn):
    comp = label_components(mask, conn)
    labels, count = brute_components(mask, conn.value)
    assert comp.count == count
    assert np.array_equal(comp.labels, labels)
    assert comp.sizes.sum() == mask.sum()


@settings(max_examples=30, deadline=None)
@given(small_masks(), st.sampled_from([FACE, FULL]))
def test_components_partition_foreground(mask, conn):
    comp = label_components(mask, conn)
    assert np.array_equal(comp.labels > 0, mask)


# -- keep_largest_component ----------------------------------------------------

def test_keep_largest():
    m = np.zeros((10, 3, 3), bool)
    m[0:5, 0, 0] = True  # 5 voxels
    m[7:10, 2, 2] = True  # 3 voxels
    out = keep_largest_component(m, FULL)
    assert out.sum() == 5
    assert out[0:5, 0, 0].all()


def test_keep_largest_single_component_identity():
    m = np.zeros((4, 4, 4), bool)
    m[1:3, 1:3, 1:3] = True
    assert np.array_equal(keep_largest_component(m, FULL), m)


def test_keep_largest_tie_break_scan_order():
    m = np.zeros((7, 1, 1), bool)
    m[0:2, 0, 0] = True
    m[5:7, 0, 0] = True
    out = keep_largest_component(m, FULL)
    assert out[0:2, 0, 0].all() and not out[5:7, 0, 0].any()


def test_keep_largest_empty():
    m = np.zeros((3, 3, 3), bool)
    assert keep_largest_component(m, FULL).sum() == 0


def test_keep_largest_wraps_binary_mask():
    m = BinaryMask(np.ones((2, 2, 2), bool), Spacing(1, 1, 4))
    out = keep_largest_component(m, FULL)
    assert isinstance(out, BinaryMask)
    assert out.spacing.as_tuple() == (1.0, 1.0, 4.0)


# -- fill_holes ---------------------------------------------------------------

def test_hollow_shell_filled():
    m = np.zeros((5, 5, 5), bool)
    m[1:4, 1:4, 1:4] = True
    m[2, 2, 2] = False
    out = fill_holes(m, FACE)
    assert out[2, 2, 2]
    assert out.sum() == 27


def test_open_tunnel_unchanged():
    m = np.ones((5, 5, 5), bool)
    m[2, 2, :] = False  # tunnel open at both z faces
    out = fill_holes(m, FACE)
    assert np.array_equal(out, m)
    assert np.array_equal(out, brute_fill_holes(m, 6))


@settings(max_examples=60, deadline=None)
@given(small_masks(), st.sampled_from([FACE, FULL]))
def test_fill_holes_matches_flood_oracle(mask, conn):
    assert np.array_equal(fill_holes(mask, conn), brute_fill_holes(mask, conn.value))


@settings(max_examples=30, deadline=None)
@given(small_masks())
def test_fill_holes_idempotent_and_extensive(mask):
    once = fill_holes(mask, FACE)
    assert (once | mask).sum() == once.sum()  # output superset of input
    assert np.array_equal(fill_holes(once, FACE), once)


# -- binary_morph -------------------------------------------------------------

def test_dilate_single_voxel_face():
    m = np.zeros((5, 5, 5), bool)
    m[2, 2, 2] = True
    out = binary_morph(m, "dilate", FACE, 1)
    assert out.sum() == 7  # plus-sign cluster
    assert out[2, 2, 2] and out[1, 2, 2] and out[3, 2, 2]


def test_close_convex_identity():
    m = np.zeros((6, 6, 6), bool)
    m[1:5, 1:5, 1:5] = True
    assert np.array_equal(binary_morph(m, "close", FULL, 1), m)


def test_close_convex_identity_at_border():
    # cube touching the grid border: closing must still be the identity
    m = np.ones((3, 3, 3), bool)
    assert np.array_equal(binary_morph(m, "close", FULL, 1), m)


def test_close_bridges_two_voxel_gap():
    m = np.zeros((5, 3, 3), bool)
    m[1, 1, 1] = m[3, 1, 1] = True
    out = binary_morph(m, "close", FULL, 1)
    assert np.array_equal(out, brute_close(m, 26, 1))
    assert out[2, 1, 1]


@settings(max_examples=40, deadline=None)
@given(small_masks(5), st.sampled_from([FACE, FULL]), st.integers(1, 2))
def test_dilate_matches_oracle(mask, conn, iters):
    assert np.array_equal(binary_morph(mask, "dilate", conn, iters), brute_dilate(mask, conn.value, iters))


@settings(max_examples=40, deadline=None)
@given(small_masks(5), st.sampled_from([FACE, FULL]), st.integers(1, 2))
def test_erode_matches_oracle(mask, conn, iters):
    assert np.array_equal(binary_morph(mask, "erode", conn, iters), brute_erode(mask, conn.value, iters))


@settings(max_examples=40, deadline=None)
@given(small_masks(5), st.sampled_from([FACE, FULL]), st.integers(1, 2))
def test_close_matches_oracle(mask, conn, iters):
    assert np.array_equal(binary_morph(mask, "close", conn, iters), brute_close(mask, conn.value, iters))


@settings(max_examples=40, deadline=None)
@given(small_masks(5), st.sampled_from([FACE, FULL]))
def test_morph_extensivity(mask, conn):
    dilated = binary_morph(mask, "dilate", conn, 1)
    eroded = binary_morph(mask, "erode", conn, 1)
    closed = binary_morph(mask, "close", conn, 1)
    assert (dilated & mask).sum() == mask.sum()  # dilate extensive
    assert (eroded | mask).sum() == mask.sum()  # erode anti-extensive
    assert (closed & mask).sum() == mask.sum()  # close extensive
    assert np.array_equal(binary_morph(closed, "close", conn, 1), closed)  # idempotent


def test_morph_rejects_bad_args():
    m = np.zeros((2, 2, 2), bool)
    with pytest.raises(ValueError):
        binary_morph(m, "open", FULL, 1)
    with pytest.raises(ValueError):
        binary_morph(m, "dilate", FULL, 0)


# -- extract_boundary -----------------------------------------------------------

def test_boundary_single_voxel():
    m = np.zeros((3, 3, 3), bool)
    m[1, 1, 1] = True
    assert np.array_equal(extract_boundary(m), m)


def test_boundary_solid_cube_is_shell():
    m = np.zeros((5, 5, 5), bool)
    m[1:4, 1:4, 1:4] = True
    out = extract_boundary(m)
    assert out.sum() == 26  # 27-voxel cube minus its center
    assert not out[2, 2, 2]


def test_boundary_empty():
    assert extract_boundary(np.zeros((3, 3, 3), bool)).sum() == 0


def test_boundary_grid_edge_counts_as_background():
    m = np.ones((3, 3, 3), bool)
    out = extract_boundary(m)
    assert not out[1, 1, 1]
    assert out.sum() == 26


@settings(max_examples=60, deadline=None)
@given(small_masks())
def test_boundary_matches_oracle(mask):
    assert np.array_equal(extract_boundary(mask), brute_boundary(mask))


@settings(max_examples=30, deadline=None)
@given(small_masks())
def test_boundary_subset_of_mask(mask):
    bnd = extract_boundary(mask)
    assert not (bnd & ~mask).any()
