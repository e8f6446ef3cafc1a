"""Acceptance checks, shared by the test suite and ``distress verify``.

Each check returns a CriterionResult carrying the measured numbers, so a
failing run reports how far off it was.
"""

from __future__ import annotations

import gc
import math
import time
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from distress.dic import (
    MAX_ITERATIONS,
    DegenerateSubsetError,
    ShapeParams,
    Status,
    SubsetSpec,
    default_search_radius,
    extended_dic,
    full_field,
    integer_search,
    make_grid,
    min_subset_size,
    zncc,
    znssd,
)
from distress.fields import CantileverField, affine_field, rigid_translation
from distress.harness import max_displacement_px
from distress.interp import build_spline
from distress.metrics import field_errors, strain_errors
from distress.strain import strain_pipeline
from distress.synth import SpeckleSpec, generate_speckles, make_image_pair, rasterize, rasterize_disks

SUBSETS = tuple(range(21, 102, 10))
SEED = 1
V_MAX = 0.005
BENCH_STRIDE = 25
# 2000 px grids use a wider stride so each subset size sees as many points as at 1000 px
CONVERGENCE_STRIDES = {500: 25, 1000: 25, 2000: 50}
STRAIN_STRIDE = 2
STRAIN_SUBSETS = (61, 101)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


def cantilever() -> CantileverField:
    return CantileverField(strict=False).with_max_v(V_MAX)


@lru_cache(maxsize=None)
def _pair(image_size: int):
    truth = cantilever()
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.01, 0.01, SEED), truth, image_size)
    return ref, dfm, build_spline(dfm), truth


@lru_cache(maxsize=None)
def benchmark_cell(image_size: int, side: int, engine: str, stride: int):
    """(results, grid, timings, stats) for one cantilever benchmark cell."""
    ref, dfm, spline, truth = _pair(image_size)
    radius = default_search_radius(max_displacement_px(truth, image_size))
    grid = make_grid(ref.shape, side // 2, stride, radius)
    tm: dict = {}
    res = full_field(ref, dfm, grid, engine, radius, spline, tm)
    tm["per_subset"] = tm["match"] / len(res)
    return res, grid, tm, field_errors(res, truth, image_size, tm)


def _warm_up():
    img = (np.random.default_rng(0).random((24, 24)) * 255).astype(np.uint8)
    extended_dic(img, build_spline(img), SubsetSpec(12, 12, 3), ShapeParams())


def basic_band() -> CriterionResult:
    t0 = time.perf_counter()
    means = [benchmark_cell(500, s, "basic", BENCH_STRIDE)[3].mean_e2e for s in SUBSETS]
    elapsed = time.perf_counter() - t0
    in_band = all(0.02 <= m <= 0.06 for m in means)
    tight = sum(0.03 <= m <= 0.04 for m in means)
    ok = in_band and tight >= len(means) / 2 and elapsed < 600
    detail = (f"mean e2e {['%.4f' % m for m in means]} px; {tight}/{len(means)} in [0.03, 0.04]; "
              f"{elapsed:.1f} s")
    return CriterionResult(1, "Basic DIC accuracy band", ok, detail)


def extended_accuracy() -> CriterionResult:
    ext = {s: benchmark_cell(500, s, "extended", BENCH_STRIDE)[3].mean_e2e for s in SUBSETS}
    bas = {s: benchmark_cell(500, s, "basic", BENCH_STRIDE)[3].mean_e2e for s in SUBSETS}
    ok = (all(ext[s] <= 0.015 for s in SUBSETS if s >= 61) and ext[101] <= 0.010
          and all(ext[s] < bas[s] for s in SUBSETS))
    detail = f"extended mean e2e {['%.4f' % ext[s] for s in SUBSETS]} px (subset 101: {ext[101]:.4f})"
    return CriterionResult(2, "Extended DIC accuracy", ok, detail)


def rigid_oracle() -> CriterionResult:
    size, side = 500, 41
    field = rigid_translation(0.25 / size, 0.25 / size)
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.01, 0.01, SEED), field, size)
    grid = make_grid(ref.shape, side // 2, BENCH_STRIDE, 3)
    errs = {}
    for engine in ("basic", "extended"):
        st = field_errors(full_field(ref, dfm, grid, engine, 3), field, size)
        errs[engine] = max(st.mean_abs_u, st.mean_abs_v)
    exact, total = 0, 0
    for k in range(1, 6):
        for shift in ((k, 0), (0, -k), (k, -k)):
            r, d, _ = make_image_pair(SpeckleSpec(0.01, 0.01, SEED), rigid_translation(shift[0] / size, shift[1] / size), size)
            g = make_grid(r.shape, 10, BENCH_STRIDE, k + 2)
            for sub in g.subsets():
                du, dv, _ = integer_search(r, d, sub, k + 2)
                exact += (du, dv) == shift
                total += 1
    ok = errs["basic"] <= 0.1 and errs["extended"] <= 0.01 and exact == total
    detail = (f"mean abs error basic {errs['basic']:.4f} px, extended {errs['extended']:.4f} px; "
              f"integer shifts exact {exact}/{total}")
    return CriterionResult(3, "Rigid-shift oracle", ok, detail)


def affine_gradients() -> CriterionResult:
    size = 500
    grads = np.array([0.005, -0.005, 0.005, -0.005])
    field = affine_field(*grads, 0.3 / size, 0.2 / size)
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.01, 0.01, SEED), field, size)
    spline = build_spline(dfm)
    radius = default_search_radius(max_displacement_px(field, size))
    worst_mean, worst_point = 0.0, 0.0
    for side in SUBSETS:
        res = full_field(ref, dfm, make_grid(ref.shape, side // 2, BENCH_STRIDE, radius), "extended", radius, spline)
        est = np.array([r.params.as_array()[2:] for r in res if r.ok])
        worst_mean = max(worst_mean, float(np.abs(est.mean(0) - grads).max()))
        if side == 101:
            worst_point = float(np.abs(est - grads).max())
    ok = worst_mean <= 5e-4 and worst_point <= 5e-4
    detail = (f"worst grid-mean gradient error {worst_mean:.2e} over subsets 21-101; "
              f"worst single-point error at subset 101 {worst_point:.2e}")
    return CriterionResult(4, "Affine-gradient recovery", ok, detail)


@lru_cache(maxsize=None)
def strain_rms(side: int) -> dict:
    res, grid, _, _ = benchmark_cell(500, side, "extended", STRAIN_STRIDE)
    truth = cantilever()
    return {m: np.array(strain_errors(strain_pipeline(m, res, grid.shape, side), truth, 500))
            for m in ("diff", "smooth-then-diff", "gradients")}


def strain_ordering() -> CriterionResult:
    ok, parts = True, []
    for side in STRAIN_SUBSETS:
        r = strain_rms(side)
        ok &= bool(np.all(r["gradients"] <= r["diff"]) and np.all(r["smooth-then-diff"] >= 0.9 * r["gradients"]))
        parts.append(f"{side}: diff {np.round(r['diff'] * 1e4, 2).tolist()} smooth "
                     f"{np.round(r['smooth-then-diff'] * 1e4, 2).tolist()} grad {np.round(r['gradients'] * 1e4, 2).tolist()}")
    return CriterionResult(5, "Strain method ordering", ok, "RMS x1e4 (ex, ey, gxy) " + "; ".join(parts))


def criterion_identities() -> CriterionResult:
    rng = np.random.default_rng(SEED)
    worst_id, worst_aff = 0.0, 0.0
    for _ in range(1000):
        f = rng.integers(0, 256, (21, 21)).astype(float)
        g = rng.integers(0, 256, (21, 21)).astype(float)
        worst_id = max(worst_id, abs(znssd(f, g) - (2 - 2 * zncc(f, g))))
        a, b = rng.uniform(0.01, 100), rng.uniform(-500, 500)
        worst_aff = max(worst_aff, abs(zncc(f, a * f + b) - 1))
    rejected = 0
    for const in (np.zeros((21, 21)), np.full((21, 21), 200.0)):
        try:
            zncc(const, rng.integers(0, 256, (21, 21)))
        except DegenerateSubsetError:
            rejected += 1
    ok = worst_id <= 1e-10 and worst_aff <= 1e-9 and rejected == 2
    detail = f"max |znssd - (2 - 2 zncc)| {worst_id:.1e}; max |zncc(f, af+b) - 1| {worst_aff:.1e}; degenerate rejected {rejected}/2"
    return CriterionResult(6, "Criterion identities", ok, detail)


def subset_rule() -> CriterionResult:
    v = min_subset_size(2000, 0.01, 0.01)
    return CriterionResult(7, "Subset-size rule", v == 21, f"min_subset_size(2000, 0.01, 0.01) = {v}")


def convergence() -> CriterionResult:
    _warm_up()
    n_ok, n_all, means = 0, 0, {}
    for size, stride in CONVERGENCE_STRIDES.items():
        its = []
        for side in SUBSETS:
            res = benchmark_cell(size, side, "extended", stride)[0]
            n_ok += sum(r.ok and r.iterations <= MAX_ITERATIONS for r in res)
            n_all += len(res)
            its += [r.iterations for r in res if r.ok]
        means[size] = float(np.mean(its))
    ref, _, _, _ = _pair(500)
    other, _, _ = make_image_pair(SpeckleSpec(0.01, 0.01, SEED + 1000), rigid_translation(0, 0), 500)
    spline = build_spline(other)
    worst = [extended_dic(ref, spline, SubsetSpec(x, 250, 20), ShapeParams()) for x in range(100, 401, 50)]
    capped = [w for w in worst if w.status is Status.MAX_ITERATIONS and w.iterations == MAX_ITERATIONS]
    rate = n_ok / n_all
    ok = (rate >= 0.99 and means[500] <= 6 and means[1000] <= 6 and means[2000] <= 12
          and len(capped) > 0 and all(w.iterations <= MAX_ITERATIONS for w in worst))
    detail = (f"converged {rate:.4f} of {n_all}; mean iterations "
              + ", ".join(f"{k}: {v:.2f}" for k, v in means.items())
              + f"; unrelated images: {len(capped)}/{len(worst)} stopped at {MAX_ITERATIONS} with max-iterations")
    return CriterionResult(8, "Convergence discipline", ok, detail)


def simulator_fidelity() -> CriterionResult:
    worst = 0.0
    rng = np.random.default_rng(SEED)
    for r in (5.0, 6.3, 9.7, 15.0):
        for _ in range(4):
            c = np.array([[32 + rng.random(), 32 + rng.random()]])
            img = rasterize_disks(c, r, 64, 64)
            worst = max(worst, abs(img.sum() / 255.0 / (math.pi * r * r) - 1))
    spec = SpeckleSpec(0.01, 0.01, 77)
    a = rasterize(generate_speckles(spec), None, 300)
    b = rasterize(generate_speckles(spec), None, 300)
    identical = a.tobytes() == b.tobytes()
    shifted = rasterize(generate_speckles(spec), rigid_translation(3 / 300, -2 / 300), 300)
    # deformed(y, x) = reference(y + 2, x - 3) away from the borders
    consistent = bool(np.array_equal(shifted[10:-10, 10:-10], a[12:-8, 7:-13]))
    ok = worst <= 0.01 and identical and consistent
    detail = f"max coverage-mass error {worst:.2e}; same seed bit-identical {identical}; integer shift exact {consistent}"
    return CriterionResult(9, "Simulator fidelity", ok, detail)


def _exponent(sides, times) -> float:
    return float(np.polyfit(np.log(sides), np.log(times), 1)[0])


INTERP_ROUNDS = 25


def _interleaved_interp_times(image, n_cells: int, rounds: int = INTERP_ROUNDS) -> list[float]:
    """Per-cell median spline build time over ``rounds`` round-robin passes.

    Interleaving exposes every cell to the same host load drift. The median
    is used because on a shared core both tails are heavy: a minimum is set
    by rare fast runs and a mean by scheduler stalls.
    """
    samples = np.empty((rounds, n_cells))
    gc.disable()  # as timeit does
    try:
        for r in range(rounds):
            for c in range(n_cells):
                t = time.perf_counter()
                build_spline(image)
                samples[r, c] = time.perf_counter() - t
    finally:
        gc.enable()
    return [float(x) for x in np.median(samples, axis=0)]


def timing_trends() -> CriterionResult:
    _warm_up()
    sides = np.array(SUBSETS, dtype=float)
    t_basic = [benchmark_cell(500, s, "basic", BENCH_STRIDE)[2]["per_subset"] for s in SUBSETS]
    t_ext = [benchmark_cell(500, s, "extended", BENCH_STRIDE)[2]["per_subset"] for s in SUBSETS]
    interp = _interleaved_interp_times(_pair(500)[1], len(SUBSETS))
    eb, ee = _exponent(sides, t_basic), _exponent(sides, t_ext)
    spread = (max(interp) - min(interp)) / float(np.mean(interp))
    ok = ee > 1.5 and eb < 1.3 and spread < 0.10
    detail = f"exponent extended {ee:.2f}, basic {eb:.2f}; interpolation time spread {spread:.1%}"
    return CriterionResult(10, "Timing trends", ok, detail)


CHECKS = (basic_band, extended_accuracy, rigid_oracle, affine_gradients, strain_ordering,
          criterion_identities, subset_rule, convergence, simulator_fidelity, timing_trends)


def run_all(echo=None) -> list[CriterionResult]:
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for check in CHECKS:
            out.append(check())
            if echo:
                echo(out[-1].line())
    return out
