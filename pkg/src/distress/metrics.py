"""Displacement and strain error statistics against simulator ground truth."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from distress.dic.model import MatchResult
from distress.fields import DeformationField
from distress.strain import STRAIN_KEYS, FieldGrid

FAILURE_FLAG_FRACTION = 0.05


@dataclass(frozen=True)
class ErrorStats:
    """Means and population standard deviations of per-point errors (px)."""

    mean_abs_u: float
    mean_abs_v: float
    std_u: float
    std_v: float
    mean_e2e: float
    std_e2e: float
    n_points: int
    n_failed: int
    wall_time_per_subset: float = float("nan")
    interpolation_time: float = float("nan")
    mean_iterations: float = float("nan")

    @property
    def flagged(self) -> bool:
        """More than 5% of the grid failed."""
        total = self.n_points + self.n_failed
        return total > 0 and self.n_failed > FAILURE_FLAG_FRACTION * total

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flagged"] = self.flagged
        return d


def point_errors(result: MatchResult, truth: DeformationField, location, px_scale: float):
    """(E_u, E_v, E_e) in px for one converged result.

    ``location`` is the subset centre in px; truth is evaluated at
    ``location / px_scale`` and its displacement scaled back to px.
    """
    if not result.ok:
        raise ValueError(f"result status {result.status.value} has no valid displacement")
    x, y = location
    u, v = truth.displacement(x / px_scale, y / px_scale)
    eu = abs(result.params.u - float(u) * px_scale)
    ev = abs(result.params.v - float(v) * px_scale)
    return eu, ev, math.hypot(eu, ev)


def aggregate(errors, n_failed: int = 0, timings: dict | None = None) -> ErrorStats:
    """Statistics of an (n, 3) collection of (E_u, E_v, E_e) rows."""
    e = np.asarray(errors, dtype=float).reshape(-1, 3)
    if len(e) == 0:
        raise ValueError("no valid points to aggregate")
    t = timings or {}
    return ErrorStats(
        mean_abs_u=float(e[:, 0].mean()), mean_abs_v=float(e[:, 1].mean()),
        std_u=float(e[:, 0].std()), std_v=float(e[:, 1].std()),
        mean_e2e=float(e[:, 2].mean()), std_e2e=float(e[:, 2].std()),
        n_points=len(e), n_failed=int(n_failed),
        wall_time_per_subset=float(t.get("per_subset", float("nan"))),
        interpolation_time=float(t.get("interp", float("nan"))),
        mean_iterations=float(t.get("iterations", float("nan"))),
    )


def field_errors(results: list[MatchResult], truth: DeformationField, px_scale: float,
                 timings: dict | None = None) -> ErrorStats:
    """Aggregate point errors over a grid; failed points are counted, not used."""
    rows = [point_errors(r, truth, (r.subset.x, r.subset.y), px_scale) for r in results if r.ok]
    t = dict(timings or {})
    if results:
        t.setdefault("per_subset", t.get("match", float("nan")) / len(results))
        if results[0].engine == "extended":
            t.setdefault("iterations", float(np.mean([r.iterations for r in results if r.ok] or [np.nan])))
    return aggregate(rows, n_failed=len(results) - len(rows), timings=t)


def strain_errors(recon: FieldGrid, truth: DeformationField, px_scale: float) -> tuple[float, float, float]:
    """Node-wise RMS of (reconstructed - analytic) strain over valid nodes."""
    if not recon.mask.any():
        raise ValueError("strain grid has no valid nodes")
    x, y = recon.coords()
    ok = recon.mask
    exact = truth.strain(x[ok] / px_scale, y[ok] / px_scale)
    return tuple(float(np.sqrt(np.mean((recon[k][ok] - np.broadcast_to(t, ok.sum())) ** 2)))
                 for k, t in zip(STRAIN_KEYS, exact))
