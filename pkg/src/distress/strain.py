"""Strain reconstruction from DIC grids: differentiation, moving-average smoothing, gradient extraction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from distress.dic.model import MatchResult

METHODS = ("diff", "smooth-then-diff", "gradients", "gradients-then-smooth")
STRAIN_KEYS = ("ex", "ey", "gxy")


@dataclass(frozen=True)
class FieldGrid:
    """Node values on a regular lattice; ``values[name]`` has shape (rows, cols).

    Node (i, j) sits at pixel (x0 + j * stride, y0 + i * stride). Invalid
    nodes hold NaN and are False in ``mask``.
    """

    origin: tuple[int, int]
    stride: int
    values: dict[str, np.ndarray]
    mask: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError("stride must be positive")
        for k, v in self.values.items():
            if v.shape != self.mask.shape:
                raise ValueError(f"{k} has shape {v.shape}, mask has {self.mask.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def __getitem__(self, key: str) -> np.ndarray:
        return self.values[key]

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (x, y) of every node."""
        rows, cols = self.shape
        x0, y0 = self.origin
        return np.meshgrid(x0 + self.stride * np.arange(cols), y0 + self.stride * np.arange(rows))


def _masked(values: dict[str, np.ndarray], mask: np.ndarray) -> dict[str, np.ndarray]:
    return {k: np.where(mask, v, np.nan) for k, v in values.items()}


def grid_from_results(results: list[MatchResult], shape: tuple[int, int], keys=("u", "v")) -> FieldGrid:
    """Arrange row-major results into a FieldGrid of the chosen ShapeParams fields."""
    rows, cols = shape
    if len(results) != rows * cols:
        raise ValueError(f"{len(results)} results do not fill a {rows}x{cols} grid")
    if rows < 1 or cols < 1:
        raise ValueError("empty grid")
    mask = np.array([r.ok for r in results]).reshape(shape)
    vals = {k: np.array([getattr(r.params, k) for r in results], dtype=float).reshape(shape) for k in keys}
    xs = [r.subset.x for r in results[:cols]]
    stride = (xs[1] - xs[0]) if cols > 1 else (results[cols].subset.y - results[0].subset.y if rows > 1 else 1)
    return FieldGrid((results[0].subset.x, results[0].subset.y), int(stride), _masked(vals, mask), mask)


def smooth(grid: FieldGrid, n: int) -> FieldGrid:
    """Mean of the valid nodes in each (2n+1)^2 window, truncated at the edges."""
    if n < 0:
        raise ValueError("half-width must be non-negative")
    if n == 0:
        return grid
    w = grid.mask.astype(float)
    count = _window_sum(w, n)
    mask = count > 0
    out = {}
    for k, v in grid.values.items():
        total = _window_sum(np.where(grid.mask, v, 0.0), n)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[k] = np.where(mask, total / np.where(mask, count, 1.0), np.nan)
    return replace(grid, values=out, mask=mask)


def _window_sum(a: np.ndarray, n: int) -> np.ndarray:
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=s[1:, 1:])
    rows, cols = a.shape
    r0 = np.clip(np.arange(rows) - n, 0, rows)[:, None]
    r1 = np.clip(np.arange(rows) + n + 1, 0, rows)[:, None]
    c0 = np.clip(np.arange(cols) - n, 0, cols)[None, :]
    c1 = np.clip(np.arange(cols) + n + 1, 0, cols)[None, :]
    return s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0]


def _derivative(v: np.ndarray, ok: np.ndarray, h: float, axis: int):
    """Central differences where both neighbours are valid, one-sided otherwise."""
    v = np.moveaxis(v, axis, 0)
    ok = np.moveaxis(ok, axis, 0)
    d = np.full(v.shape, np.nan)
    good = np.zeros(v.shape, dtype=bool)
    if v.shape[0] >= 2:
        fwd = ok[1:] & ok[:-1]
        diff = (v[1:] - v[:-1]) / h
        # forward (node i uses i, i+1) and backward (node i uses i-1, i)
        d[:-1] = np.where(fwd, diff, np.nan)
        good[:-1] = fwd
        back = np.full(v.shape, np.nan)
        back_ok = np.zeros(v.shape, dtype=bool)
        back[1:] = diff
        back_ok[1:] = fwd
        use_back = ~good & back_ok
        d[use_back] = back[use_back]
        good |= back_ok
        if v.shape[0] >= 3:
            central = ok[2:] & ok[:-2]
            cd = (v[2:] - v[:-2]) / (2 * h)
            d[1:-1] = np.where(central, cd, d[1:-1])
    good &= ok
    d = np.where(good, d, np.nan)
    return np.moveaxis(d, 0, axis), np.moveaxis(good, 0, axis)


def differentiate(grid: FieldGrid) -> FieldGrid:
    """Strains from a (u, v) grid by finite differences over the stride (px/px)."""
    u, v, ok = grid["u"], grid["v"], grid.mask
    h = float(grid.stride)
    ux, okx_u = _derivative(u, ok, h, axis=1)
    uy, oky_u = _derivative(u, ok, h, axis=0)
    vx, okx_v = _derivative(v, ok, h, axis=1)
    vy, oky_v = _derivative(v, ok, h, axis=0)
    mask = okx_u & oky_u & okx_v & oky_v
    return FieldGrid(grid.origin, grid.stride, _masked({"ex": ux, "ey": vy, "gxy": uy + vx}, mask), mask)


def strain_from_gradients(results: list[MatchResult], shape: tuple[int, int]) -> FieldGrid:
    """Per-node relabelling of Extended DIC gradients: ex = ux, ey = vy, gxy = uy + vx."""
    valid = [r for r in results if r.ok]
    if valid and not any(r.params.has_gradients for r in valid):
        raise ValueError("results carry no displacement gradients (Basic DIC?); strains would be meaningless")
    if any(r.engine != "extended" for r in results):
        raise ValueError("strain_from_gradients needs Extended DIC results")
    g = grid_from_results(results, shape, keys=("ux", "uy", "vx", "vy"))
    vals = {"ex": g["ux"], "ey": g["vy"], "gxy": g["uy"] + g["vx"]}
    return FieldGrid(g.origin, g.stride, vals, g.mask)


def filter_half_width(subset_size: int, stride: int) -> int:
    """Node half-width of a smoothing window about half the subset size.

    The pixel window is the odd number nearest subset_size / 2; its
    half-width is then expressed in grid nodes (at least one node).
    """
    window = 2 * int(np.floor((subset_size / 2 - 1) / 2 + 0.5)) + 1
    window = max(window, 1)
    return max(1, int(round((window - 1) / 2 / stride)))


def strain_pipeline(method: str, results: list[MatchResult], shape: tuple[int, int], subset_size: int,
                    half_width: int | None = None) -> FieldGrid:
    """Reconstruct (ex, ey, gxy) on the result grid with one of ``METHODS``."""
    if method not in METHODS:
        raise ValueError(f"unknown strain method {method!r}; expected one of {METHODS}")
    if method.startswith("gradients"):
        out = strain_from_gradients(results, shape)
    else:
        disp = grid_from_results(results, shape)
        n = half_width if half_width is not None else filter_half_width(subset_size, disp.stride)
        out = differentiate(smooth(disp, n) if method == "smooth-then-diff" else disp)
    if method == "gradients-then-smooth":
        n = half_width if half_width is not None else filter_half_width(subset_size, out.stride)
        out = smooth(out, n)
    return replace(out, meta={"method": method, "subset_size": subset_size})
