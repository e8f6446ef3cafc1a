"""Extended DIC: six-parameter Newton iteration on the ZNSSD criterion.

The reference subset is read at integer pixels; the deformed subset is
sampled from the bicubic spline at the first-order warped positions

    x' = x + u + ux dx + uy dy,    y' = y + v + vx dx + vy dy.

Steps come from the Gauss-Newton Hessian of ZNSSD with the exact
derivative of the zero-mean, unit-norm deformed subset. A step that
lowers the correlation is halved (at most 8 times) within one iteration.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from distress.dic.model import (
    GRADIENT_BOUND,
    MAX_ITERATIONS,
    MatchResult,
    ShapeParams,
    Status,
    SubsetSpec,
)
from distress.interp import SplineImage, spline_value_grad

PARAM_TOL = 0.5e-8
CC_TOL = 1e-8
MAX_HALVINGS = 8
# correlation gains below this are rounding noise; the step floor then sits near PARAM_TOL
CC_FLOOR = 1e-13
STALL_STEP = 1e3 * PARAM_TOL

# kernel status codes
_CONVERGED, _MAXITER, _DEGENERATE, _OUTSIDE, _DIVERGED = 0, 1, 2, 3, 4
_STATUS = {
    _CONVERGED: Status.CONVERGED,
    _MAXITER: Status.MAX_ITERATIONS,
    _DEGENERATE: Status.DEGENERATE,
    _OUTSIDE: Status.OUT_OF_RANGE,
    _DIVERGED: Status.DIVERGED,
}


@numba.njit(cache=True)
def _sample(coef, cx, cy, dxs, dys, p, g, gx, gy):
    h = coef.shape[0] - 2
    w = coef.shape[1] - 2
    for k in range(dxs.shape[0]):
        X = cx + dxs[k] + p[0] + p[2] * dxs[k] + p[3] * dys[k]
        Y = cy + dys[k] + p[1] + p[4] * dxs[k] + p[5] * dys[k]
        if not (X >= 0.0 and X <= w - 1 and Y >= 0.0 and Y <= h - 1):
            return False
        g[k], gx[k], gy[k] = spline_value_grad(coef, X, Y)
    return True


@numba.njit(cache=True)
def _correlate(fhat, g):
    n = g.shape[0]
    mean = 0.0
    for k in range(n):
        mean += g[k]
    mean /= n
    ss = 0.0
    for k in range(n):
        d = g[k] - mean
        ss += d * d
    norm = math.sqrt(ss)
    if norm <= 1e-12 * math.sqrt(n) * max(1.0, abs(mean)):
        return np.nan, mean, 0.0
    cc = 0.0
    for k in range(n):
        cc += fhat[k] * (g[k] - mean)
    return cc / norm, mean, norm


@numba.njit(cache=True)
def _solve6(a, b):
    """Gaussian elimination with partial pivoting; returns (x, ok)."""
    m = a.copy()
    x = b.copy()
    scale = 0.0
    for i in range(6):
        scale = max(scale, abs(m[i, i]))
    if scale == 0.0:
        return x, False
    for col in range(6):
        piv = col
        for r in range(col + 1, 6):
            if abs(m[r, col]) > abs(m[piv, col]):
                piv = r
        if abs(m[piv, col]) <= 1e-13 * scale:
            return x, False
        if piv != col:
            for c in range(6):
                m[col, c], m[piv, c] = m[piv, c], m[col, c]
            x[col], x[piv] = x[piv], x[col]
        for r in range(col + 1, 6):
            f = m[r, col] / m[col, col]
            for c in range(col, 6):
                m[r, c] -= f * m[col, c]
            x[r] -= f * x[col]
    for r in range(5, -1, -1):
        s = x[r]
        for c in range(r + 1, 6):
            s -= m[r, c] * x[c]
        x[r] = s / m[r, r]
    return x, True


@numba.njit(cache=True)
def newton_kernel(ref, coef, cx, cy, m, p0, max_iter, param_tol, cc_tol, max_halvings, strict):
    """Returns (params, cc, iterations, status, step_sum, step_max)."""
    side = 2 * m + 1
    n = side * side
    dxs = np.empty(n)
    dys = np.empty(n)
    f = np.empty(n)
    k = 0
    for j in range(-m, m + 1):
        for i in range(-m, m + 1):
            dxs[k] = i
            dys[k] = j
            f[k] = ref[cy + j, cx + i]
            k += 1
    p = p0.copy()
    fmean = f.mean()
    fc = f - fmean
    fnorm = math.sqrt((fc * fc).sum())
    if fnorm <= 1e-12 * math.sqrt(n) * max(1.0, abs(fmean)):
        return p, np.nan, 0, _DEGENERATE, np.nan, np.nan
    fhat = fc / fnorm

    g = np.empty(n)
    gx = np.empty(n)
    gy = np.empty(n)
    tg = np.empty(n)
    tgx = np.empty(n)
    tgy = np.empty(n)
    if not _sample(coef, cx, cy, dxs, dys, p, g, gx, gy):
        return p, np.nan, 0, _OUTSIDE, np.nan, np.nan
    cc, gmean, gnorm = _correlate(fhat, g)
    if gnorm == 0.0:
        return p, np.nan, 0, _DEGENERATE, np.nan, np.nan

    jac = np.empty(6)
    tcc, tmean, tnorm = cc, gmean, gnorm
    step_sum = np.nan
    step_max = np.nan
    for it in range(1, max_iter + 1):
        # normal equations with J^T J - n mu mu^T - A A^T, A = J^T ghat
        jtj = np.zeros((6, 6))
        mu = np.zeros(6)
        A = np.zeros(6)
        B = np.zeros(6)
        for k in range(n):
            ghat = (g[k] - gmean) / gnorm
            jac[0] = gx[k]
            jac[1] = gy[k]
            jac[2] = gx[k] * dxs[k]
            jac[3] = gx[k] * dys[k]
            jac[4] = gy[k] * dxs[k]
            jac[5] = gy[k] * dys[k]
            for a in range(6):
                mu[a] += jac[a]
                A[a] += jac[a] * ghat
                B[a] += jac[a] * fhat[k]
                for b in range(a, 6):
                    jtj[a, b] += jac[a] * jac[b]
        for a in range(6):
            mu[a] /= n
        H = np.empty((6, 6))
        for a in range(6):
            for b in range(a, 6):
                H[a, b] = jtj[a, b] - n * mu[a] * mu[b] - A[a] * A[b]
                H[b, a] = H[a, b]
        rhs = np.empty(6)
        for a in range(6):
            rhs[a] = -(cc * A[a] - B[a]) * gnorm
        dp, ok = _solve6(H, rhs)
        if not ok:
            return p, cc, it, _DEGENERATE, step_sum, step_max

        accepted = False
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = p + t * dp
            if _sample(coef, cx, cy, dxs, dys, trial, tg, tgx, tgy):
                tcc, tmean, tnorm = _correlate(fhat, tg)
                if tnorm > 0.0 and tcc >= cc:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            # no ascent left along the Newton direction: numerically stationary
            if np.abs(dp).max() < STALL_STEP:
                return p, cc, it, _CONVERGED, 0.0, 0.0
            continue
        step = t * dp
        step_sum = abs(step.sum())
        step_max = np.abs(step).max()
        dcc = tcc - cc
        p = trial
        g, tg = tg, g
        gx, tgx = tgx, gx
        gy, tgy = tgy, gy
        cc, gmean, gnorm = tcc, tmean, tnorm
        for a in range(2, 6):
            if abs(p[a]) > GRADIENT_BOUND:
                return p, cc, it, _DIVERGED, step_sum, step_max
        if step_sum < param_tol and dcc < cc_tol and (not strict or step_max < param_tol):
            return p, cc, it, _CONVERGED, step_sum, step_max
        if dcc <= CC_FLOOR and step_max < STALL_STEP:
            return p, cc, it, _CONVERGED, step_sum, step_max
    return p, cc, max_iter, _MAXITER, step_sum, step_max


def extended_dic(reference, spline: SplineImage, subset: SubsetSpec, initial_guess: ShapeParams,
                 max_iter: int = MAX_ITERATIONS, strict: bool = True) -> MatchResult:
    """Refine ``initial_guess`` for one subset by Newton iteration."""
    if max_iter > MAX_ITERATIONS:
        raise ValueError(f"max_iter is capped at {MAX_ITERATIONS}")
    subset.check(reference.shape)
    ref = np.ascontiguousarray(reference, dtype=float)
    p, cc, iters, code, ssum, smax = newton_kernel(
        ref, spline.coef, subset.x, subset.y, subset.half_size, initial_guess.as_array(),
        max_iter, PARAM_TOL, CC_TOL, MAX_HALVINGS, strict)
    return MatchResult(subset, ShapeParams.from_array(p), float(cc), int(iters), _STATUS[code],
                       engine="extended", step_sum=float(ssum), step_max=float(smax))
