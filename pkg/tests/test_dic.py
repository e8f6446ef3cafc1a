import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import N, pair
from distress.dic import (
    MAX_ITERATIONS,
    DegenerateSubsetError,
    SearchRangeError,
    ShapeParams,
    Status,
    SubsetSpec,
    basic_dic,
    batch_correlation_maps,
    extended_dic,
    fit_biparabola,
    full_field,
    full_range_search,
    integer_search,
    make_grid,
    min_subset_size,
    subpixel_peak,
    zncc,
    znssd,
)
from distress.dic.basic import basic_from_map
from distress.fields import affine_field
from distress.interp import build_spline
from distress.synth import SpeckleSpec, make_image_pair

rng = np.random.default_rng(0)


# criteria

def test_znssd_identity_on_random_pairs():
    for _ in range(1000):
        f = rng.integers(0, 256, (11, 11))
        g = rng.integers(0, 256, (11, 11))
        assert abs(znssd(f, g) - (2 - 2 * zncc(f, g))) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(a=st.floats(1e-3, 1e3), b=st.floats(-1e3, 1e3), seed=st.integers(0, 2**32 - 1))
def test_zncc_affine_invariance(a, b, seed):
    f = np.random.default_rng(seed).uniform(0, 255, (9, 9))
    assert zncc(f, a * f + b) == pytest.approx(1.0, abs=1e-9)
    assert zncc(f, -a * f + b) == pytest.approx(-1.0, abs=1e-9)


def test_zncc_symmetry_and_range():
    for _ in range(200):
        f = rng.integers(0, 256, (7, 7))
        g = rng.integers(0, 256, (7, 7))
        c = zncc(f, g)
        assert c == zncc(g, f)
        assert -1.0 <= c <= 1.0


def test_criteria_trivial_values():
    f = rng.integers(0, 256, (15, 15))
    assert zncc(f, f) == pytest.approx(1.0, abs=1e-12)
    assert znssd(f, f) == pytest.approx(0.0, abs=1e-12)
    assert znssd(f, 255 - f) == pytest.approx(4.0, abs=1e-12)


@pytest.mark.parametrize("fn", [zncc, znssd])
def test_criteria_reject_degenerate_and_mismatched(fn):
    f = rng.integers(0, 256, (5, 5))
    with pytest.raises(DegenerateSubsetError):
        fn(np.zeros((5, 5)), f)
    with pytest.raises(DegenerateSubsetError):
        fn(f, np.full((5, 5), 7.0))
    with pytest.raises(ValueError):
        fn(f, f[:4])


def test_min_subset_size():
    assert min_subset_size(2000, 0.01, 0.01) == 21
    assert min_subset_size(500, 0.01, 0.01) == 5
    assert min_subset_size(1000, 0.02, 0.02) == 21
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        min_subset_size(1000, 0.012, 0.01)
    with pytest.warns(UserWarning):
        min_subset_size(1000, 0.05, 0.01)
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        min_subset_size(1000, 0.01, 0.05)


@given(n=st.integers(16, 4000), r=st.floats(0.001, 0.2))
def test_min_subset_size_odd_and_reduces_to_n_r(n, r):
    s = min_subset_size(n, r, r)
    assert s % 2 == 1
    assert n * r - 1e-6 <= s <= n * r + 2


# integer search

def test_integer_search_identity():
    ref, _ = pair(0, 0)
    du, dv, m = integer_search(ref, ref, SubsetSpec(100, 100, 10), 4)
    assert (du, dv) == (0, 0)
    assert m[1, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("shift", [(1, 0), (0, 2), (3, 0), (-4, 1), (5, -5)])
def test_integer_shift_recovered_exactly(shift):
    ref, dfm = pair(*shift)
    for y in range(40, 161, 40):
        for x in range(40, 161, 40):
            du, dv, _ = integer_search(ref, dfm, SubsetSpec(x, y, 10), 7)
            assert (du, dv) == shift


def test_integer_search_errors():
    ref, dfm = pair(3, 0)
    blank = ref.copy()
    blank[80:121, 80:121] = 0
    with pytest.raises(DegenerateSubsetError):
        integer_search(blank, dfm, SubsetSpec(100, 100, 10), 5)
    with pytest.raises(SearchRangeError):
        integer_search(ref, dfm, SubsetSpec(100, 100, 10), 3)
    with pytest.raises(SearchRangeError):
        integer_search(ref, dfm, SubsetSpec(15, 100, 10), 8)


def test_batch_maps_match_per_subset():
    from distress.dic.search import correlation_map

    ref, dfm = pair(1.3, -0.7)
    centers = np.array([[40, 50], [100, 100], [150, 60], [77, 143]])
    maps = batch_correlation_maps(ref, dfm, centers, 9, 4)
    for (x, y), m in zip(centers, maps):
        np.testing.assert_array_equal(m, correlation_map(ref, dfm, SubsetSpec(int(x), int(y), 9), 4))


def test_full_range_search_finds_shift():
    ref, dfm = pair(-17, 23)
    du, dv, cc = full_range_search(ref, dfm, SubsetSpec(90, 80, 12))
    assert (du, dv) == (-17, 23)
    assert cc > 0.99


# biparabolic fit

X, Y = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0])


@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_biparabola_matches_lstsq(vals):
    c = np.array(vals).reshape(3, 3)
    A = np.stack([np.ones(9), X.ravel(), Y.ravel(), X.ravel() ** 2, Y.ravel() ** 2, (X * Y).ravel()], 1)
    ref = np.linalg.lstsq(A, c.ravel(), rcond=None)[0]
    np.testing.assert_allclose(fit_biparabola(c), ref, atol=1e-12)


def test_biparabola_exact_peak():
    x0, y0 = 0.3, -0.2
    c = 1 - 0.5 * (X - x0) ** 2 - 0.4 * (Y - y0) ** 2 + 0.1 * (X - x0) * (Y - y0)
    dx, dy = subpixel_peak(c)
    assert dx == pytest.approx(x0, abs=1e-12)
    assert dy == pytest.approx(y0, abs=1e-12)


def test_symmetric_map_gives_zero_offset():
    c = 1 - 0.3 * X**2 - 0.3 * Y**2 - 0.05 * (X**2 * Y**2)
    np.testing.assert_allclose(subpixel_peak(c), (0.0, 0.0), atol=1e-15)


def test_non_concave_map_falls_back():
    c = 0.3 * X**2 + 0.3 * Y**2
    assert subpixel_peak(c) is None
    r = basic_from_map(SubsetSpec(50, 50, 5), 2, -1, c)
    assert r.status is Status.FIT_FALLBACK
    assert (r.params.u, r.params.v) == (2.0, -1.0)


def test_basic_quarter_pixel(quarter_shift):
    ref, dfm, _ = quarter_shift
    errs = []
    for y in range(40, 161, 20):
        for x in range(40, 161, 20):
            r = basic_dic(ref, dfm, SubsetSpec(x, y, 12), 3)
            assert r.ok and not r.params.has_gradients
            errs += [abs(r.params.u - 0.25), abs(r.params.v - 0.25)]
    assert np.mean(errs) <= 0.1


# extended

def test_extended_self_match():
    ref, _ = pair(0, 0)
    r = extended_dic(ref, build_spline(ref), SubsetSpec(100, 100, 10), ShapeParams())
    assert r.ok
    assert abs(r.params.u) <= 1e-6 and abs(r.params.v) <= 1e-6
    assert r.cc == pytest.approx(1.0, abs=1e-9)
    assert r.iterations <= 3


def test_extended_quarter_pixel(quarter_shift):
    ref, _, spline = quarter_shift
    errs, its = [], []
    for y in range(40, 161, 20):
        for x in range(40, 161, 20):
            r = extended_dic(ref, spline, SubsetSpec(x, y, 15), ShapeParams())
            assert r.ok
            assert -1.0 <= r.cc <= 1 + 1e-6
            errs += [abs(r.params.u - 0.25), abs(r.params.v - 0.25)]
            its.append(r.iterations)
    assert np.mean(errs) <= 0.01
    assert np.mean(its) <= 6


@pytest.mark.parametrize("shift", [(2, 0), (-3, 4)])
def test_engines_agree_on_integer_shift(shift):
    ref, dfm = pair(*shift)
    spline = build_spline(dfm)
    for y in (60, 100, 140):
        for x in (60, 100, 140):
            b = basic_dic(ref, dfm, SubsetSpec(x, y, 12), 7)
            e = extended_dic(ref, spline, SubsetSpec(x, y, 12), ShapeParams(b.params.u, b.params.v))
            for r in (b, e):
                assert abs(r.params.u - shift[0]) <= 1e-3 and abs(r.params.v - shift[1]) <= 1e-3


def test_extended_recovers_affine_gradients():
    size = 500
    grads = np.array([0.005, -0.005, 0.005, -0.005])
    field = affine_field(*grads, 0.3 / size, 0.2 / size)
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.01, 0.01, 3), field, size)
    spline = build_spline(dfm)
    for y in range(100, 401, 75):
        for x in range(100, 401, 75):
            u, v = field.displacement(x / size, y / size)
            r = extended_dic(ref, spline, SubsetSpec(x, y, 50), ShapeParams(round(u * size), round(v * size)))
            assert r.ok
            np.testing.assert_allclose(r.params.as_array()[2:], grads, atol=5e-4)


def test_extended_unrelated_images_hit_cap():
    ref, _ = pair(0, 0, seed=1)
    other, _ = pair(0, 0, seed=2)
    spline = build_spline(other)
    r = extended_dic(ref, spline, SubsetSpec(100, 100, 12), ShapeParams())
    assert r.status in (Status.MAX_ITERATIONS, Status.DIVERGED, Status.OUT_OF_RANGE)
    assert r.iterations <= MAX_ITERATIONS
    hits = [extended_dic(ref, spline, SubsetSpec(x, 100, 12), ShapeParams()) for x in range(40, 161, 20)]
    assert any(h.status is Status.MAX_ITERATIONS and h.iterations == MAX_ITERATIONS for h in hits)


def test_extended_errors():
    ref, dfm = pair(0, 0)
    spline = build_spline(dfm)
    blank = ref.copy()
    blank[80:121, 80:121] = 0
    assert extended_dic(blank, spline, SubsetSpec(100, 100, 10), ShapeParams()).status is Status.DEGENERATE
    far = extended_dic(ref, spline, SubsetSpec(15, 100, 10), ShapeParams(-20, 0))
    assert far.status is Status.OUT_OF_RANGE
    with pytest.raises(ValueError):
        extended_dic(ref, spline, SubsetSpec(100, 100, 10), ShapeParams(), max_iter=41)
    with pytest.raises(ValueError):
        extended_dic(ref, spline, SubsetSpec(5, 100, 10), ShapeParams())


def test_extended_improves_on_initial_correlation(quarter_shift):
    ref, dfm, spline = quarter_shift
    sub = SubsetSpec(100, 100, 10)
    start = zncc(sub.patch(ref), sub.patch(dfm))
    r = extended_dic(ref, spline, sub, ShapeParams())
    assert r.cc >= start


# full field

def test_make_grid_bounds():
    g = make_grid((200, 300), 10, 25, 3)
    assert g.xs.min() >= 13 and g.xs.max() <= 299 - 13
    assert g.ys.min() >= 13 and g.ys.max() <= 199 - 13
    assert np.all(np.diff(g.xs) == 25)
    assert len(g.subsets()) == g.shape[0] * g.shape[1]
    assert g.subsets()[1].x == g.xs[1] and g.subsets()[1].y == g.ys[0]
    with pytest.raises(ValueError):
        make_grid((20, 20), 10, 5)


@pytest.mark.parametrize("engine", ["basic", "extended"])
def test_full_field_identity(engine):
    ref, _ = pair(0, 0)
    res = full_field(ref, ref, make_grid(ref.shape, 10, 30, 3), engine, search_radius=3)
    assert all(r.ok for r in res)
    assert all(abs(r.params.u) < 1e-6 and abs(r.params.v) < 1e-6 for r in res)


def test_full_field_extended_seeds_large_shift():
    ref, dfm = pair(-11.4, 6.6)
    res = full_field(ref, dfm, make_grid(ref.shape, 12, 30, 14), "extended")
    assert all(r.ok for r in res)
    assert max(abs(r.params.u + 11.4) for r in res) < 0.05
    assert max(abs(r.params.v - 6.6) for r in res) < 0.05


@pytest.mark.parametrize("engine", ["basic", "extended"])
def test_full_field_keeps_failed_points(engine):
    ref, dfm = pair(0.4, 0.0)
    ref = ref.copy()
    ref[:, :60] = 0
    g = make_grid(ref.shape, 10, 30, 3)
    res = full_field(ref, dfm, g, engine, search_radius=3)
    assert len(res) == len(g.subsets())
    bad = [r for r in res if r.subset.x + 10 < 60]
    assert bad and all(r.status is Status.DEGENERATE for r in bad)
    assert all(r.ok for r in res if r.subset.x - 10 >= 60)


def test_full_field_rejects_unknown_engine():
    ref, _ = pair(0, 0)
    with pytest.raises(ValueError):
        full_field(ref, ref, make_grid(ref.shape, 10, 50), "other")
    with pytest.raises(ValueError):
        full_field(ref, ref, make_grid(ref.shape, 10, 50), "basic")


def test_perfect_match_keeps_integer_peak():
    # asymmetric neighbours would pull a fitted peak off the exact match
    m = np.array([[0.2, 0.5, 0.3], [0.6, 1.0, 0.9], [0.1, 0.4, 0.2]])
    r = basic_from_map(SubsetSpec(50, 50, 10), 3, -2, m)
    assert (r.params.u, r.params.v, r.cc) == (3.0, -2.0, 1.0)
    m[1, 1] = 0.99
    r = basic_from_map(SubsetSpec(50, 50, 10), 3, -2, m)
    assert r.params.u != 3.0 and r.cc <= 1.0
