"""Bicubic spline interpolation of gray images.

The interpolant is the tensor-product natural cubic spline through every
pixel value, stored as uniform cubic B-spline coefficients on a grid
padded by one node on each side. Evaluation touches a 4x4 coefficient
block, so queries are O(1) once the coefficients are built.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_banded


class SplineDomainError(ValueError):
    pass


def _natural_coefficients(values: np.ndarray, axis: int) -> np.ndarray:
    """B-spline coefficients along ``axis`` with zero end second derivatives.

    Interpolation gives c[i-1] + 4 c[i] + c[i+1] = 6 f[i]; the natural end
    condition c[-1] = 2 c[0] - c[1] collapses the first row to c[0] = f[0]
    (and likewise at the far end), leaving a tridiagonal interior system.
    """
    f = np.moveaxis(values, axis, 0)
    n = f.shape[0]
    c = np.empty((n + 2,) + f.shape[1:])
    c[1] = f[0]
    c[n] = f[n - 1]
    if n > 2:
        rhs = 6.0 * f[1:n - 1].copy()
        rhs[0] -= f[0]
        rhs[-1] -= f[n - 1]
        m = n - 2
        ab = np.empty((3, m))
        ab[0] = 1.0
        ab[1] = 4.0
        ab[2] = 1.0
        c[2:n] = solve_banded((1, 1), ab, rhs.reshape(m, -1)).reshape(rhs.shape)
    c[0] = 2 * c[1] - c[2]
    c[n + 1] = 2 * c[n] - c[n - 1]
    return np.moveaxis(c, 0, axis)


@dataclass(frozen=True)
class SplineImage:
    coef: np.ndarray  # (height + 2, width + 2)
    width: int
    height: int
    build_seconds: float

    def _check(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if (np.any(~(x >= 0)) or np.any(~(x <= self.width - 1))
                or np.any(~(y >= 0)) or np.any(~(y <= self.height - 1))):
            raise SplineDomainError(
                f"query outside [0, {self.width - 1}] x [0, {self.height - 1}]")
        return x, y

    def eval(self, x, y):
        x, y = self._check(x, y)
        shape = np.broadcast(x, y).shape
        xb, yb = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
        out = np.empty(xb.size)
        gx = np.empty(xb.size)
        gy = np.empty(xb.size)
        _eval_many(self.coef, xb, yb, out, gx, gy, False)
        return out.reshape(shape)

    def eval_grad(self, x, y):
        x, y = self._check(x, y)
        shape = np.broadcast(x, y).shape
        xb, yb = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
        out = np.empty(xb.size)
        gx = np.empty(xb.size)
        gy = np.empty(xb.size)
        _eval_many(self.coef, xb, yb, out, gx, gy, True)
        return gx.reshape(shape), gy.reshape(shape)


def build_spline(image: np.ndarray) -> SplineImage:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or min(image.shape) < 4:
        raise ValueError(f"spline needs a 2-D image of at least 4x4, got shape {image.shape}")
    t0 = time.perf_counter()
    coef = _natural_coefficients(_natural_coefficients(image, 1), 0)
    elapsed = time.perf_counter() - t0
    return SplineImage(np.ascontiguousarray(coef), image.shape[1], image.shape[0], elapsed)


@numba.njit(inline="always")
def _weights(t):
    s = 1.0 - t
    t2 = t * t
    t3 = t2 * t
    return (s * s * s / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0)


@numba.njit(inline="always")
def _dweights(t):
    s = 1.0 - t
    t2 = t * t
    return (-0.5 * s * s,
            1.5 * t2 - 2.0 * t,
            -1.5 * t2 + t + 0.5,
            0.5 * t2)


@numba.njit(inline="always")
def _cell(x, n):
    i = int(math.floor(x))
    if i > n - 2:
        i = n - 2
    if i < 0:
        i = 0
    return i, x - i


@numba.njit(cache=True)
def spline_value_grad(coef, x, y):
    """Value and (d/dx, d/dy) at one point; caller guarantees the domain."""
    h = coef.shape[0] - 2
    w = coef.shape[1] - 2
    i, tx = _cell(x, w)
    j, ty = _cell(y, h)
    wx0, wx1, wx2, wx3 = _weights(tx)
    wy0, wy1, wy2, wy3 = _weights(ty)
    dx0, dx1, dx2, dx3 = _dweights(tx)
    dy0, dy1, dy2, dy3 = _dweights(ty)
    val = 0.0
    gx = 0.0
    gy = 0.0
    for r in range(4):
        if r == 0:
            wy, dy = wy0, dy0
        elif r == 1:
            wy, dy = wy1, dy1
        elif r == 2:
            wy, dy = wy2, dy2
        else:
            wy, dy = wy3, dy3
        row = coef[j + r]
        a = row[i] * wx0 + row[i + 1] * wx1 + row[i + 2] * wx2 + row[i + 3] * wx3
        b = row[i] * dx0 + row[i + 1] * dx1 + row[i + 2] * dx2 + row[i + 3] * dx3
        val += wy * a
        gx += wy * b
        gy += dy * a
    return val, gx, gy


@numba.njit(cache=True)
def _eval_many(coef, xs, ys, out, gx, gy, want_grad):
    for k in range(xs.shape[0]):
        v, a, b = spline_value_grad(coef, xs[k], ys[k])
        out[k] = v
        if want_grad:
            gx[k] = a
            gy[k] = b
