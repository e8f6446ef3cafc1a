import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from distress.dic.model import MatchResult, ShapeParams, Status, SubsetSpec
from distress.fields import CantileverField, affine_field
from distress.strain import (
    FieldGrid,
    differentiate,
    filter_half_width,
    grid_from_results,
    smooth,
    strain_from_gradients,
    strain_pipeline,
)


def disp_grid(u, v, stride=10, origin=(20, 30), mask=None):
    mask = np.ones(u.shape, dtype=bool) if mask is None else mask
    return FieldGrid(origin, stride, {"u": np.where(mask, u, np.nan), "v": np.where(mask, v, np.nan)}, mask)


def results_on(field, rows, cols, stride=10, origin=(20, 30), engine="extended", size=1.0):
    out = []
    for i in range(rows):
        for j in range(cols):
            x, y = origin[0] + j * stride, origin[1] + i * stride
            u, v = field.displacement(x / size, y / size)
            g = field.gradient(x / size, y / size) if engine == "extended" else (0, 0, 0, 0)
            out.append(MatchResult(SubsetSpec(x, y, 5), ShapeParams(float(u) * size, float(v) * size, *map(float, g)),
                                   1.0, 3, Status.CONVERGED, engine))
    return out


def test_smooth_trivial_cases():
    g = disp_grid(np.full((5, 6), 2.5), np.full((5, 6), -1.0))
    for n in (0, 1, 3):
        s = smooth(g, n)
        np.testing.assert_allclose(s["u"], 2.5)
        np.testing.assert_allclose(s["v"], -1.0)
    r = np.random.default_rng(0).normal(size=(4, 4))
    assert smooth(disp_grid(r, r), 0) is not None
    np.testing.assert_array_equal(smooth(disp_grid(r, r), 0)["u"], r)


def test_smooth_three_by_three_mean():
    vals = np.arange(9.0).reshape(3, 3) ** 2
    s = smooth(disp_grid(vals, vals), 1)
    assert s["u"][1, 1] == pytest.approx(vals.sum() / 9)
    # corner window is truncated to the four available nodes
    assert s["u"][0, 0] == pytest.approx(vals[:2, :2].mean())


def test_smooth_skips_invalid_nodes():
    vals = np.ones((3, 3))
    vals[1, 1] = 100.0
    mask = np.ones((3, 3), dtype=bool)
    mask[1, 1] = False
    s = smooth(disp_grid(vals, vals, mask=mask), 1)
    np.testing.assert_allclose(s["u"], 1.0)
    assert s.mask.all()
    lone = np.zeros((5, 5), dtype=bool)
    lone[0, 0] = True
    s = smooth(disp_grid(np.ones((5, 5)), np.ones((5, 5)), mask=lone), 1)
    assert s.mask[1, 1] and not s.mask[4, 4] and np.isnan(s["u"][4, 4])


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 7), elements=st.floats(-100, 100)), st.integers(0, 3))
def test_smooth_never_widens_range(a, n):
    s = smooth(disp_grid(a, a), n)["u"]
    assert s.min() >= a.min() - 1e-9 and s.max() <= a.max() + 1e-9


@pytest.mark.parametrize("stride", [1, 7, 25])
def test_differentiate_linear_is_exact(stride):
    rows, cols = 6, 8
    x = stride * np.arange(cols)[None, :] + 0.0 * np.arange(rows)[:, None]
    y = stride * np.arange(rows)[:, None] + 0.0 * np.arange(cols)[None, :]
    u = 0.3 + 0.004 * x - 0.002 * y
    v = -1.1 + 0.001 * x + 0.003 * y
    s = differentiate(disp_grid(u, v, stride=stride))
    assert s.mask.all()
    np.testing.assert_allclose(s["ex"], 0.004, atol=1e-12)
    np.testing.assert_allclose(s["ey"], 0.003, atol=1e-12)
    np.testing.assert_allclose(s["gxy"], -0.001, atol=1e-12)


def test_differentiate_rigid_and_invalid_neighbours():
    s = differentiate(disp_grid(np.full((4, 4), 0.3), np.full((4, 4), -2.0)))
    np.testing.assert_array_equal(s["ex"], 0.0)
    mask = np.ones((3, 5), dtype=bool)
    mask[:, 2] = False
    u = np.arange(5.0)[None, :].repeat(3, 0)
    s = differentiate(disp_grid(u, u * 0, stride=1, mask=mask))
    # columns 1 and 3 fall back to one-sided differences; column 2 stays invalid
    np.testing.assert_allclose(s["ex"][:, [0, 1, 3, 4]], 1.0)
    assert not s.mask[:, 2].any()
    single = np.zeros((3, 3), dtype=bool)
    single[1, 1] = True
    assert not differentiate(disp_grid(np.ones((3, 3)), np.ones((3, 3)), mask=single)).mask.any()


def test_differentiate_cantilever_truth_converges():
    field = CantileverField(strict=False).with_max_v(0.005)
    size = 500
    errs = []
    for stride in (20, 10):
        res = results_on(field, 400 // stride, 400 // stride, stride=stride, origin=(50, 50), size=size)
        g = grid_from_results(res, (400 // stride, 400 // stride))
        s = differentiate(g)
        x, y = s.coords()
        ex, ey, gxy = field.strain(x / size, y / size)
        inner = (slice(1, -1), slice(1, -1))
        errs.append(max(np.abs(s["ex"] - ex)[inner].max(), np.abs(s["ey"] - ey)[inner].max(),
                        np.abs(s["gxy"] - gxy)[inner].max()))
    assert errs[1] < errs[0] / 3


def test_strain_from_gradients_affine_and_rigid():
    res = results_on(affine_field(0.005, 0.001, -0.002, 0.003), 3, 4)
    s = strain_from_gradients(res, (3, 4))
    np.testing.assert_allclose(s["ex"], 0.005)
    np.testing.assert_allclose(s["ey"], 0.003)
    np.testing.assert_allclose(s["gxy"], -0.001)
    res = results_on(affine_field(0, 0, 0, 0, 0.2, 0.1), 2, 2)
    with pytest.raises(ValueError):
        strain_from_gradients(res, (2, 2))


def test_strain_from_gradients_rejects_basic():
    res = results_on(affine_field(0.005, 0, 0, 0), 2, 2, engine="basic")
    with pytest.raises(ValueError):
        strain_from_gradients(res, (2, 2))


def test_strain_from_gradients_is_per_node():
    res = results_on(affine_field(0.005, 0.001, -0.002, 0.003), 4, 4)
    base = strain_from_gradients(res, (4, 4))
    r = res[5]
    p = r.params
    res[5] = MatchResult(r.subset, ShapeParams(p.u, p.v, p.ux + 0.1, p.uy, p.vx, p.vy), r.cc, r.iterations,
                         r.status, r.engine)
    changed = strain_from_gradients(res, (4, 4))["ex"] != base["ex"]
    assert changed.sum() == 1 and changed.ravel()[5]


def test_grid_from_results_layout():
    res = results_on(affine_field(0, 0, 0, 0, 1.0, 2.0), 2, 3, stride=7, origin=(11, 13))
    res[4] = MatchResult(res[4].subset, ShapeParams(), float("nan"), 0, Status.DEGENERATE, "extended")
    g = grid_from_results(res, (2, 3))
    assert g.origin == (11, 13) and g.stride == 7 and g.shape == (2, 3)
    assert not g.mask[1, 1] and np.isnan(g["u"][1, 1])
    x, y = g.coords()
    assert x[1, 2] == 25 and y[1, 2] == 20
    with pytest.raises(ValueError):
        grid_from_results(res, (3, 3))


def test_filter_half_width():
    # window = odd number nearest half the subset; half-width in nodes, at least one
    assert filter_half_width(21, 1) == 5
    assert filter_half_width(61, 1) == 15
    assert filter_half_width(101, 10) == 2
    assert filter_half_width(21, 25) == 1


def test_pipeline_dispatch():
    field = affine_field(0.004, 0.0, 0.0, -0.002)
    res = results_on(field, 7, 7)
    # half-width is one node; truncated edge windows bias differences within two nodes of the edge
    inner = (slice(2, -2), slice(2, -2))
    for m in ("diff", "smooth-then-diff", "gradients", "gradients-then-smooth"):
        s = strain_pipeline(m, res, (7, 7), subset_size=41)
        assert s.mask.all()
        np.testing.assert_allclose(s["ex"][inner], 0.004, atol=1e-12)
        np.testing.assert_allclose(s["ey"][inner], -0.002, atol=1e-12)
        assert s.meta["method"] == m
    edge = strain_pipeline("smooth-then-diff", res, (7, 7), subset_size=41)
    assert edge["ex"][3, 0] == pytest.approx(0.002)
    with pytest.raises(ValueError):
        strain_pipeline("bogus", res, (7, 7), 41)
