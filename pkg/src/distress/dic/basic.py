"""Basic DIC: integer correlation search plus biparabolic subpixel peak fit."""

from __future__ import annotations

import numpy as np

from distress.dic.model import (
    DegenerateSubsetError,
    MatchResult,
    SearchRangeError,
    ShapeParams,
    Status,
    SubsetSpec,
)
from distress.dic.search import integer_search

_X = np.array([[-1, 0, 1]] * 3, dtype=float)
_Y = _X.T


def fit_biparabola(cc_map: np.ndarray) -> np.ndarray:
    """Least-squares coefficients (a0..a5) of a0 + a1 x + a2 y + a3 x^2 + a4 y^2 + a5 xy.

    On the 3x3 stencil the regressors are orthogonal once x^2 and y^2 are
    centred (mean 2/3, squared norm 2), so the normal equations reduce to
    a1 = sum(x c)/6, a2 = sum(y c)/6, a5 = sum(x y c)/4,
    a3 = sum((x^2 - 2/3) c)/2, a4 = sum((y^2 - 2/3) c)/2,
    a0 = mean(c) - 2/3 (a3 + a4).
    """
    c = np.asarray(cc_map, dtype=float)
    a1 = (_X * c).sum() / 6
    a2 = (_Y * c).sum() / 6
    a5 = (_X * _Y * c).sum() / 4
    a3 = ((_X**2 - 2 / 3) * c).sum() / 2
    a4 = ((_Y**2 - 2 / 3) * c).sum() / 2
    a0 = c.mean() - 2 / 3 * (a3 + a4)
    return np.array([a0, a1, a2, a3, a4, a5])


def subpixel_peak(cc_map: np.ndarray) -> tuple[float, float] | None:
    """Stationary point of the fitted surface, or None if it is not a usable maximum."""
    if not np.all(np.isfinite(cc_map)):
        return None
    _, a1, a2, a3, a4, a5 = fit_biparabola(cc_map)
    hxx, hyy, hxy = 2 * a3, 2 * a4, a5
    det = hxx * hyy - hxy * hxy
    if not (hxx < 0 and det > 0):
        return None
    dx = (-a1 * hyy + a2 * hxy) / det
    dy = (-a2 * hxx + a1 * hxy) / det
    if not (abs(dx) < 1 and abs(dy) < 1):
        return None
    return float(dx), float(dy)


PERFECT_MATCH = 1.0 - 1e-12


def basic_from_map(subset: SubsetSpec, du: int, dv: int, cc_map: np.ndarray) -> MatchResult:
    if cc_map[1, 1] >= PERFECT_MATCH:
        # zncc attains 1 only at an exact match, which the surface fit cannot improve on
        return MatchResult(subset, ShapeParams(float(du), float(dv)), float(cc_map[1, 1]), 0,
                           Status.CONVERGED, engine="basic")
    peak = subpixel_peak(cc_map)
    if peak is None:
        return MatchResult(subset, ShapeParams(float(du), float(dv)), float(cc_map[1, 1]), 0,
                           Status.FIT_FALLBACK, engine="basic")
    a = fit_biparabola(cc_map)
    dx, dy = peak
    cc = a[0] + a[1] * dx + a[2] * dy + a[3] * dx * dx + a[4] * dy * dy + a[5] * dx * dy
    # the fitted surface may overshoot the attainable maximum of zncc
    cc = min(cc, 1.0)
    return MatchResult(subset, ShapeParams(du + dx, dv + dy), float(cc), 0, Status.CONVERGED, engine="basic")


def basic_dic(reference, deformed, subset: SubsetSpec, search_radius: int) -> MatchResult:
    try:
        du, dv, cc_map = integer_search(reference, deformed, subset, search_radius)
    except DegenerateSubsetError:
        return MatchResult(subset, ShapeParams(), float("nan"), 0, Status.DEGENERATE, engine="basic")
    except SearchRangeError:
        return MatchResult(subset, ShapeParams(), float("nan"), 0, Status.OUT_OF_RANGE, engine="basic")
    return basic_from_map(subset, du, dv, cc_map)
