"""Grid construction and whole-field matching with either engine."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from distress.dic.basic import basic_from_map
from distress.dic.extended import extended_dic
from distress.dic.model import (
    DegenerateSubsetError,
    MatchResult,
    SearchRangeError,
    ShapeParams,
    Status,
    SubsetSpec,
)
from distress.dic.search import _finish, batch_correlation_maps, full_range_search
from distress.interp import SplineImage, build_spline

ENGINES = ("basic", "extended")


@dataclass(frozen=True)
class Grid:
    """Row-major lattice of subset centres (x = column, y = row)."""

    xs: np.ndarray
    ys: np.ndarray
    half_size: int

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.ys), len(self.xs)

    def subsets(self) -> list[SubsetSpec]:
        return [SubsetSpec(int(x), int(y), self.half_size) for y in self.ys for x in self.xs]

    def centers(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X.ravel(), Y.ravel()], axis=1)


def make_grid(image_shape: tuple[int, int], half_size: int, stride: int, margin: int = 0) -> Grid:
    """Centres every ``stride`` px, at least ``half_size + margin`` px from each border.

    The lattice is centred in the usable band so both borders get the same slack.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    h, w = image_shape
    lo = half_size + margin

    def axis(n):
        hi = n - 1 - lo
        if hi < lo:
            raise ValueError(f"subset half-size {half_size} with margin {margin} does not fit a {n} px axis")
        k = (hi - lo) // stride
        start = lo + ((hi - lo) - k * stride) // 2
        return start + stride * np.arange(k + 1)

    return Grid(axis(w), axis(h), int(half_size))


def default_search_radius(max_displacement_px: float) -> int:
    return int(math.ceil(abs(max_displacement_px))) + 2


def _basic(reference, deformed, grid: Grid, search_radius: int) -> list[MatchResult]:
    maps = batch_correlation_maps(reference, deformed, grid.centers(), grid.half_size, search_radius)
    out = []
    for sub, cc in zip(grid.subsets(), maps):
        if np.isnan(cc).all():
            out.append(MatchResult(sub, ShapeParams(), float("nan"), 0, Status.DEGENERATE, "basic"))
            continue
        try:
            du, dv, local = _finish(cc)
        except DegenerateSubsetError:
            out.append(MatchResult(sub, ShapeParams(), float("nan"), 0, Status.DEGENERATE, "basic"))
            continue
        except SearchRangeError:
            out.append(MatchResult(sub, ShapeParams(), float("nan"), 0, Status.OUT_OF_RANGE, "basic"))
            continue
        out.append(basic_from_map(sub, du, dv, local))
    return out


def _seed(reference, deformed, sub: SubsetSpec) -> ShapeParams:
    try:
        du, dv, _ = full_range_search(reference, deformed, sub)
    except DegenerateSubsetError:
        return ShapeParams()
    return ShapeParams(float(du), float(dv))


def _extended(reference, deformed, grid: Grid, spline: SplineImage, clock: dict) -> list[MatchResult]:
    rows, cols = grid.shape
    clock["seed"] = 0.0
    # convert once; extended_dic would otherwise copy the whole image per subset
    reference_f = np.ascontiguousarray(reference, dtype=float)

    def seed(sub):
        t = time.perf_counter()
        p = _seed(reference, deformed, sub)
        clock["seed"] += time.perf_counter() - t
        return p

    subs = grid.subsets()
    done: list[MatchResult | None] = [None] * len(subs)
    good: list[int] = []

    def guess(i, j):
        # left neighbour, else the point above, else the nearest converged point
        for k in ((i * cols + j - 1) if j > 0 else -1, ((i - 1) * cols + j) if i > 0 else -1):
            if k >= 0 and done[k].ok:
                return done[k].params
        if good:
            d = [(grid.xs[k % cols] - grid.xs[j]) ** 2 + (grid.ys[k // cols] - grid.ys[i]) ** 2 for k in good]
            return done[good[int(np.argmin(d))]].params
        return None

    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            sub = subs[k]
            p0 = guess(i, j)
            seeded = p0 is None
            if seeded:
                p0 = seed(sub)
            res = extended_dic(reference_f, spline, sub, p0)
            if not res.ok and not seeded:
                # a poor warm start can be recovered from a fresh pixel-level seed
                retry = extended_dic(reference_f, spline, sub, seed(sub))
                if retry.ok:
                    res = MatchResult(retry.subset, retry.params, retry.cc, retry.iterations, retry.status,
                                      retry.engine, retry.step_sum, retry.step_max, {"reseeded": True})
            done[k] = res
            if res.ok:
                good.append(k)
    return done  # type: ignore[return-value]


def full_field(reference, deformed, grid: Grid, engine: str, search_radius: int | None = None,
               spline: SplineImage | None = None, timings: dict | None = None) -> list[MatchResult]:
    """Match every grid subset; results are row-major and never dropped.

    ``timings`` (if given) receives wall-clock seconds: ``interp`` (spline
    build), ``seed`` (full-range pixel searches) and ``match`` (the rest).
    """
    if engine == "basic":
        if search_radius is None:
            raise ValueError("basic engine needs a search radius")
        t0 = time.perf_counter()
        res = _basic(reference, deformed, grid, search_radius)
        if timings is not None:
            timings.update(interp=0.0, seed=0.0, match=time.perf_counter() - t0)
        return res
    if engine == "extended":
        t0 = time.perf_counter()
        if spline is None:
            spline = build_spline(deformed)
        t1 = time.perf_counter()
        clock: dict = {}
        res = _extended(reference, deformed, grid, spline, clock)
        if timings is not None:
            timings.update(interp=t1 - t0, seed=clock["seed"], match=time.perf_counter() - t1 - clock["seed"])
        return res
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
