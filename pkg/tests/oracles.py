"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately written with explicit loops / all-pairs
computations and stays independent of the library code paths it checks
(which use labelled flood fills, separable distance transforms, dynamic
programming, ...). Only usable on small grids.
"""
from __future__ import annotations

from itertools import product

import numpy as np
from scipy.stats import rankdata


def neighbor_offsets(conn: int) -> list[tuple[int, int, int]]:
    offs = []
    for d in product((-1, 0, 1), repeat=3):
        if d == (0, 0, 0):
            continue
        if conn == 6 and sum(abs(v) for v in d) != 1:
            continue
        offs.append(d)
    return offs


def brute_components(mask, conn: int):
    """BFS component labelling; ids follow first-voxel C-scan order."""
    mask = np.asarray(mask, dtype=bool)
    labels = np.zeros(mask.shape, dtype=np.int32)
    offs = neighbor_offsets(conn)
    count = 0
    for idx in np.ndindex(mask.shape):
        if mask[idx] and labels[idx] == 0:
            count += 1
            labels[idx] = count
            stack = [idx]
            while stack:
                x, y, z = stack.pop()
                for dx, dy, dz in offs:
                    u = (x + dx, y + dy, z + dz)
                    if (
                        all(0 <= u[i] < mask.shape[i] for i in range(3))
                        and mask[u]
                        and labels[u] == 0
                    ):
                        labels[u] = count
                        stack.append(u)
    return labels, count


def brute_fill_holes(mask, background_conn: int):
    """Flood the background from the border; what stays unreached is filled."""
    mask = np.asarray(mask, dtype=bool)
    reached = np.zeros(mask.shape, dtype=bool)
    offs = neighbor_offsets(background_conn)
    stack = []
    for idx in np.ndindex(mask.shape):
        on_border = any(i == 0 or i == s - 1 for i, s in zip(idx, mask.shape))
        if on_border and not mask[idx]:
            reached[idx] = True
            stack.append(idx)
    while stack:
        x, y, z = stack.pop()
        for dx, dy, dz in offs:
            u = (x + dx, y + dy, z + dz)
            if (
                all(0 <= u[i] < mask.shape[i] for i in range(3))
                and not mask[u]
                and not reached[u]
            ):
                reached[u] = True
                stack.append(u)
    return mask | ~reached


def _brute_dilate_once(mask, conn: int):
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    for idx in np.ndindex(mask.shape):
        if mask[idx]:
            continue
        for dx, dy, dz in neighbor_offsets(conn):
            u = (idx[0] + dx, idx[1] + dy, idx[2] + dz)
            if all(0 <= u[i] < mask.shape[i] for i in range(3)) and mask[u]:
                out[idx] = True
                break
    return out


def _brute_erode_once(mask, conn: int):
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    for idx in np.ndindex(mask.shape):
        if not mask[idx]:
            continue
        for dx, dy, dz in neighbor_offsets(conn):
            u = (idx[0] + dx, idx[1] + dy, idx[2] + dz)
            inside = all(0 <= u[i] < mask.shape[i] for i in range(3))
            if not inside or not mask[u]:  # outside the grid is background
                out[idx] = False
                break
    return out


def brute_dilate(mask, conn: int, iterations: int):
    out = np.asarray(mask, dtype=bool)
    for _ in range(iterations):
        out = _brute_dilate_once(out, conn)
    return out


def brute_erode(mask, conn: int, iterations: int):
    out = np.asarray(mask, dtype=bool)
    for _ in range(iterations):
        out = _brute_erode_once(out, conn)
    return out


def brute_close(mask, conn: int, iterations: int):
    """Dilate-then-erode in unbounded space, restricted back to the grid."""
    mask = np.asarray(mask, dtype=bool)
    pad = iterations
    padded = np.zeros(tuple(s + 2 * pad for s in mask.shape), dtype=bool)
    padded[pad:-pad, pad:-pad, pad:-pad] = mask
    padded = brute_dilate(padded, conn, iterations)
    padded = brute_erode(padded, conn, iterations)
    return padded[pad:-pad, pad:-pad, pad:-pad]


def brute_boundary(mask):
    """Foreground voxels with a background 6-neighbour (grid edge counts)."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros(mask.shape, dtype=bool)
    for idx in np.ndindex(mask.shape):
        if not mask[idx]:
            continue
        for dx, dy, dz in neighbor_offsets(6):
            u = (idx[0] + dx, idx[1] + dy, idx[2] + dz)
            inside = all(0 <= u[i] < mask.shape[i] for i in range(3))
            if not inside or not mask[u]:
                out[idx] = True
                break
    return out


def brute_surface_distances(a, b, spacing):
    """All-pairs boundary-to-boundary distances in mm, both directions."""
    sp = np.asarray(spacing, dtype=np.float64)
    pa = np.argwhere(brute_boundary(a)).astype(np.float64) * sp
    pb = np.argwhere(brute_boundary(b)).astype(np.float64) * sp
    diff = pa[:, None, :] - pb[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    return dist.min(axis=1), dist.min(axis=0)


def brute_dice(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def brute_surface_dice(a, b, tau_mm, spacing) -> float:
    na, nb = int(np.asarray(a, bool).sum()), int(np.asarray(b, bool).sum())
    if na + nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    d_ab, d_ba = brute_surface_distances(a, b, spacing)
    hits = int((d_ab <= tau_mm).sum()) + int((d_ba <= tau_mm).sum())
    return hits / (len(d_ab) + len(d_ba))


def brute_hausdorff(a, b, percentile, spacing):
    na, nb = int(np.asarray(a, bool).sum()), int(np.asarray(b, bool).sum())
    if na + nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return None
    d_ab, d_ba = brute_surface_distances(a, b, spacing)
    return float(max(np.percentile(d_ab, percentile), np.percentile(d_ba, percentile)))


def brute_assd(a, b, spacing):
    na, nb = int(np.asarray(a, bool).sum()), int(np.asarray(b, bool).sum())
    if na + nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return None
    d_ab, d_ba = brute_surface_distances(a, b, spacing)
    return float((d_ab.sum() + d_ba.sum()) / (len(d_ab) + len(d_ba)))


def brute_bboxes(mask, conn: int):
    """(mins, maxs) per component, from explicit min/max scans."""
    labels, count = brute_components(mask, conn)
    boxes = []
    for cid in range(1, count + 1):
        vox = np.argwhere(labels == cid)
        boxes.append((tuple(vox.min(axis=0)), tuple(vox.max(axis=0))))
    return boxes


def wilcoxon_enumerate(d, direction: str) -> float:
    """Exact one-sided signed-rank p by enumerating all 2^n sign patterns.

    Ranks of |d| (zeros dropped, average ties) are exact halves, so all
    comparisons below are exact in binary floating point.
    """
    d = np.asarray(d, dtype=np.float64)
    nz = d[d != 0.0]
    n = len(nz)
    assert n >= 1, "all differences are zero"
    ranks = rankdata(np.abs(nz))
    w_obs = float(ranks[nz > 0].sum())
    count = 0
    for bits in range(1 << n):
        w = 0.0
        for i in range(n):
            if bits >> i & 1:
                w += ranks[i]
        if direction == "greater":
            count += w >= w_obs
        else:
            count += w <= w_obs
    return count / (1 << n)
