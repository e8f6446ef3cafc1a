"""Pixel-level correlation search.

Correlation sums are accumulated in exact int64 arithmetic from 8-bit
pixels and converted to ZNCC with a single float expression, so the
per-subset and batched searches return bitwise identical maps.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from distress.dic.model import DegenerateSubsetError, SearchRangeError, SubsetSpec


def _integral(a: np.ndarray) -> np.ndarray:
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=a.dtype)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=s[1:, 1:])
    return s


def _box(s: np.ndarray, r0, c0, side):
    r1 = r0 + side
    c1 = c0 + side
    return s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0]


def _cc_from_sums(n, sf, sff, sg, sgg, sfg):
    num = n * sfg - sf * sg
    varf = n * sff - sf * sf
    varg = n * sgg - sg * sg
    with np.errstate(divide="ignore", invalid="ignore"):
        cc = num / (np.sqrt(varf.astype(float)) * np.sqrt(varg.astype(float)))
    return np.where(varg > 0, cc, -np.inf)


def pick_peak(cc: np.ndarray) -> tuple[int, int]:
    """Index (row, col) of the maximum of a (2R+1)^2 map.

    Exact ties go to the smallest |du|+|dv|, then the smallest (du, dv).
    """
    radius = cc.shape[0] // 2
    best = cc.max()
    rows, cols = np.nonzero(cc == best)
    dv, du = rows - radius, cols - radius
    k = np.lexsort((dv, du, np.abs(du) + np.abs(dv)))[0]
    return int(rows[k]), int(cols[k])


def _finish(cc: np.ndarray, offset=(0, 0)):
    radius = cc.shape[0] // 2
    if not np.isfinite(cc.max()):
        raise DegenerateSubsetError("no valid candidate window")
    r, c = pick_peak(cc)
    du, dv = c - radius + offset[0], r - radius + offset[1]
    if r in (0, 2 * radius) or c in (0, 2 * radius):
        raise SearchRangeError(f"peak at search-window edge (du={du}, dv={dv})")
    return du, dv, cc[r - 1:r + 2, c - 1:c + 2].copy()


def correlation_map(reference, deformed, subset: SubsetSpec, search_radius: int, offset=(0, 0)):
    """ZNCC for every integer offset within ``search_radius`` of ``offset``."""
    m, rad = subset.half_size, int(search_radius)
    side = subset.side
    ox, oy = offset
    subset.check(reference.shape)
    h, w = deformed.shape
    x0, y0 = subset.x + ox - m - rad, subset.y + oy - m - rad
    if x0 < 0 or y0 < 0 or x0 + side + 2 * rad > w or y0 + side + 2 * rad > h:
        raise SearchRangeError("search window leaves the deformed image")
    f = subset.patch(reference).astype(np.int64)
    sf, sff = f.sum(), (f * f).sum()
    if side * side * sff - sf * sf == 0:
        raise DegenerateSubsetError("reference subset has no intensity variation")
    region = deformed[y0:y0 + side + 2 * rad, x0:x0 + side + 2 * rad].astype(np.int64)
    windows = sliding_window_view(region, (side, side))
    sfg = np.einsum("abij,ij->ab", windows, f)
    sg_int = _integral(region)
    sgg_int = _integral(region * region)
    a = np.arange(2 * rad + 1)
    sg = _box(sg_int, a[:, None], a[None, :], side)
    sgg = _box(sgg_int, a[:, None], a[None, :], side)
    return _cc_from_sums(side * side, sf, sff, sg, sgg, sfg)


def integer_search(reference, deformed, subset: SubsetSpec, search_radius: int, offset=(0, 0)):
    """Best integer displacement and the 3x3 correlation map around it.

    Raises DegenerateSubsetError or SearchRangeError (peak on the window edge).
    """
    cc = correlation_map(reference, deformed, subset, search_radius, offset)
    return _finish(cc, offset)


def batch_correlation_maps(reference, deformed, centers: np.ndarray, half_size: int, search_radius: int):
    """ZNCC maps for many subsets of one size, shape (K, 2R+1, 2R+1).

    One product image per offset and a summed-area table make the cost per
    subset independent of the subset side. Rows of degenerate reference
    subsets are filled with NaN.
    """
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    m, rad = int(half_size), int(search_radius)
    side = 2 * m + 1
    n = side * side
    h, w = deformed.shape
    xs, ys = centers[:, 0], centers[:, 1]
    if (xs.min() - m - rad < 0 or ys.min() - m - rad < 0
            or xs.max() + m + rad > w - 1 or ys.max() + m + rad > h - 1):
        raise SearchRangeError("search windows leave the deformed image")
    ref = reference.astype(np.int64)
    dfm = deformed.astype(np.int64)
    r0, r1 = ys.min() - m, ys.max() + m + 1
    c0, c1 = xs.min() - m, xs.max() + m + 1
    fr = ref[r0:r1, c0:c1]
    rr, cc_ = ys - m - r0, xs - m - c0
    sf = _box(_integral(fr), rr, cc_, side)
    sff = _box(_integral(fr * fr), rr, cc_, side)
    sg_int, sgg_int = _integral(dfm), _integral(dfm * dfm)
    out = np.empty((len(centers), 2 * rad + 1, 2 * rad + 1))
    for dv in range(-rad, rad + 1):
        for du in range(-rad, rad + 1):
            prod = fr * dfm[r0 + dv:r1 + dv, c0 + du:c1 + du]
            sfg = _box(_integral(prod), rr, cc_, side)
            sg = _box(sg_int, ys - m + dv, xs - m + du, side)
            sgg = _box(sgg_int, ys - m + dv, xs - m + du, side)
            out[:, dv + rad, du + rad] = _cc_from_sums(n, sf, sff, sg, sgg, sfg)
    out[n * sff - sf * sf == 0] = np.nan
    return out


def full_range_search(reference, deformed, subset: SubsetSpec) -> tuple[int, int, float]:
    """Integer displacement maximizing ZNCC over every placement in the deformed image."""
    m, side = subset.half_size, subset.side
    f = subset.patch(reference).astype(float)
    f = f - f.mean()
    df = np.sqrt((f * f).sum())
    if df == 0:
        raise DegenerateSubsetError("reference subset has no intensity variation")
    g = deformed.astype(float)
    num = fftconvolve(g, f[::-1, ::-1], mode="valid")
    rows, cols = num.shape
    sg_int, sgg_int = _integral(g), _integral(g * g)
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    sg = _box(sg_int, r, c, side)
    sgg = _box(sgg_int, r, c, side)
    varg = np.maximum(sgg - sg * sg / (side * side), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cc = np.where(varg > 1e-9, num / (df * np.sqrt(varg)), -np.inf)
    k = int(np.argmax(cc))
    pr, pc = divmod(k, cols)
    return pc + m - subset.x, pr + m - subset.y, float(cc[pr, pc])
