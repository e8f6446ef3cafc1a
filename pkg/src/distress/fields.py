"""Analytic displacement fields used as ground truth.

All fields are evaluated in normalized specimen coordinates where the
specimen length is 1. Functions accept scalars or numpy arrays and
broadcast like numpy ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Protocol

import numpy as np


class OutOfDomainError(ValueError):
    """Raised when a field is evaluated outside its specimen domain."""


class DeformationField(Protocol):
    def displacement(self, x, y) -> tuple[np.ndarray, np.ndarray]: ...

    def gradient(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]: ...

    def strain(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...

    def to_dict(self) -> dict[str, Any]: ...


def strain_from_gradient(ux, uy, vx, vy):
    """Small-strain components (eps_x, eps_y, gamma_xy) from displacement gradients."""
    return ux, vy, uy + vx


# ---------------------------------------------------------------------------
# Cantilever bending


@dataclass(frozen=True)
class CantileverParams:
    """End-loaded cantilever in SI units.

    Defaults are an aluminium beam: P=4.8 N, E=69 GPa, I=175 mm^4,
    nu=0.334, G=26 GPa, half-width c=25 mm, length L=110 mm.
    """

    P: float = 4.8
    E: float = 69e9
    I: float = 175e-12
    nu: float = 0.334
    G: float = 26e9
    c: float = 0.025
    L: float = 0.110
    amplitude_scale: float = 1.0

    def __post_init__(self):
        for name in ("E", "G", "I", "c", "L", "amplitude_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.nu < 0.5:
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")


def _check_domain(p: CantileverParams, x, y, tol=1e-12):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xtol = tol * p.L
    if np.any(x < -xtol) or np.any(x > p.L + xtol) or np.any(np.abs(y) > p.c + xtol):
        raise OutOfDomainError(
            f"point outside cantilever domain 0<=x<={p.L}, |y|<={p.c}")


def cantilever_displacement(p: CantileverParams, x, y, strict: bool = True):
    """Timoshenko displacement (u, v) of an end-loaded cantilever.

    ``x`` runs from the loaded free end (x=0) to the clamped end (x=L);
    ``y`` is measured from the neutral axis. Lengths in metres.
    """
    if strict:
        _check_domain(p, x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    P, E, I, nu, G, c, L = p.P, p.E, p.I, p.nu, p.G, p.c, p.L
    u = P * y / (6 * I) * ((3 * (L**2 - x**2) - nu * y**2) / E + (y**2 - 3 * c**2) / G)
    v = P / (6 * E * I) * (x * (3 * nu * y**2 + x**2) + L**2 * (2 * L - 3 * x))
    return p.amplitude_scale * u, p.amplitude_scale * v


def cantilever_gradient(p: CantileverParams, x, y, strict: bool = True):
    """Analytic (du/dx, du/dy, dv/dx, dv/dy) of :func:`cantilever_displacement`."""
    if strict:
        _check_domain(p, x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    P, E, I, nu, G, c, L = p.P, p.E, p.I, p.nu, p.G, p.c, p.L
    k = p.amplitude_scale
    ux = -P * x * y / (E * I)
    uy = P / (6 * I) * ((3 * (L**2 - x**2) - 3 * nu * y**2) / E + (3 * y**2 - 3 * c**2) / G)
    vx = P / (6 * E * I) * (3 * nu * y**2 + 3 * x**2 - 3 * L**2)
    vy = P * nu * x * y / (E * I)
    return k * ux, k * uy, k * vx, k * vy


def cantilever_strain(p: CantileverParams, x, y, strict: bool = True):
    """Closed-form beam strains (eps_x, eps_y, gamma_xy).

    Uses the textbook expressions with I = 2c^3/3 (unit thickness); these
    agree with the gradients of :func:`cantilever_displacement` only when
    ``p.I`` satisfies that relation and G = E / (2 (1 + nu)).
    """
    if strict:
        _check_domain(p, x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    P, E, nu, G, c = p.P, p.E, p.nu, p.G, p.c
    k = p.amplitude_scale
    ex = -3 * P * x * y / (2 * c**3 * E)
    ey = 3 * nu * P * x * y / (2 * c**3 * E)
    gxy = -3 * P / (4 * c * G) * (1 - y**2 / c**2)
    return k * ex, k * ey, k * gxy


@dataclass(frozen=True)
class CantileverField:
    """Cantilever field on the unit-square image footprint.

    The beam length spans x in [0, 1]; the neutral axis sits at
    ``y = neutral_axis``. Displacements are returned in units of the beam
    length. ``strict=False`` allows evaluation beyond |y| <= c/L, which a
    square image footprint requires.
    """

    params: CantileverParams = field(default_factory=CantileverParams)
    neutral_axis: float = 0.5
    strict: bool = True

    def _to_beam(self, x, y):
        L = self.params.L
        return np.asarray(x, dtype=float) * L, (np.asarray(y, dtype=float) - self.neutral_axis) * L

    def displacement(self, x, y):
        xb, yb = self._to_beam(x, y)
        u, v = cantilever_displacement(self.params, xb, yb, strict=self.strict)
        return u / self.params.L, v / self.params.L

    def gradient(self, x, y):
        xb, yb = self._to_beam(x, y)
        return cantilever_gradient(self.params, xb, yb, strict=self.strict)

    def strain(self, x, y):
        return strain_from_gradient(*self.gradient(x, y))

    def with_max_v(self, target: float, n: int = 201) -> "CantileverField":
        """Rescale so that max |v| over the unit square equals ``target``."""
        base = replace(self, params=replace(self.params, amplitude_scale=1.0), strict=False)
        xs, ys = np.meshgrid(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, n))
        vmax = float(np.max(np.abs(base.displacement(xs, ys)[1])))
        return replace(self, params=replace(self.params, amplitude_scale=target / vmax))

    def to_dict(self):
        d = {"type": "cantilever", "neutral_axis": self.neutral_axis, "strict": self.strict}
        d.update({k: getattr(self.params, k) for k in CantileverParams.__dataclass_fields__})
        return d


@dataclass(frozen=True)
class AffineField:
    """u = dx + a11 x + a12 y,  v = dy + a21 x + a22 y."""

    a11: float = 0.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 0.0
    dx: float = 0.0
    dy: float = 0.0

    def displacement(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (self.dx + self.a11 * x + self.a12 * y,
                self.dy + self.a21 * x + self.a22 * y)

    def gradient(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return tuple(np.full(shape, a, dtype=float) for a in (self.a11, self.a12, self.a21, self.a22))

    def strain(self, x, y):
        return strain_from_gradient(*self.gradient(x, y))

    def to_dict(self):
        return {"type": "affine", "a11": self.a11, "a12": self.a12, "a21": self.a21,
                "a22": self.a22, "dx": self.dx, "dy": self.dy}


def rigid_translation(dx: float, dy: float) -> AffineField:
    return AffineField(dx=dx, dy=dy)


def affine_field(a11, a12, a21, a22, dx=0.0, dy=0.0) -> AffineField:
    return AffineField(a11, a12, a21, a22, dx, dy)


def field_from_dict(d: dict[str, Any]) -> DeformationField:
    """Inverse of ``to_dict``; also accepts the config-file spellings.

    Cantilever entries may carry ``v_max`` (target max |v| in specimen
    lengths) instead of an explicit ``amplitude_scale``.
    """
    d = dict(d)
    kind = d.pop("type")
    if kind in ("rigid", "translation"):
        return rigid_translation(d.get("dx", 0.0), d.get("dy", 0.0))
    if kind == "affine":
        return AffineField(**d)
    if kind == "cantilever":
        v_max = d.pop("v_max", None)
        neutral_axis = d.pop("neutral_axis", 0.5)
        strict = d.pop("strict", True)
        f = CantileverField(CantileverParams(**d), neutral_axis=neutral_axis, strict=strict)
        return f.with_max_v(v_max) if v_max is not None else f
    raise ValueError(f"unknown field type {kind!r}")
