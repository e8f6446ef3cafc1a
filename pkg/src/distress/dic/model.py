from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max-iterations"
    DEGENERATE = "degenerate-subset"
    OUT_OF_RANGE = "out-of-search-range"
    # biparabolic fit unusable; integer peak reported instead
    FIT_FALLBACK = "fit-fallback"
    # displacement gradients left the small-deformation bound
    DIVERGED = "diverged"


class DegenerateSubsetError(ValueError):
    """Subset has no intensity variation, so the correlation is undefined."""


class SearchRangeError(ValueError):
    """Correlation peak on the search-window edge or warp outside the image."""


MAX_ITERATIONS = 40
GRADIENT_BOUND = 0.5


@dataclass(frozen=True)
class SubsetSpec:
    """Square subset of side 2M+1 centred on an integer reference pixel (x=col, y=row)."""

    x: int
    y: int
    half_size: int

    @property
    def side(self) -> int:
        return 2 * self.half_size + 1

    def check(self, shape: tuple[int, int], margin: int = 0) -> None:
        h, w = shape
        m = self.half_size + margin
        if not (m <= self.x <= w - 1 - m and m <= self.y <= h - 1 - m):
            raise ValueError(f"subset at ({self.x}, {self.y}) with margin {m} leaves a {w}x{h} image")

    def patch(self, image: np.ndarray) -> np.ndarray:
        m = self.half_size
        return image[self.y - m:self.y + m + 1, self.x - m:self.x + m + 1]


@dataclass(frozen=True)
class ShapeParams:
    """Displacement (px) and displacement gradients of a subset centre."""

    u: float = 0.0
    v: float = 0.0
    ux: float = 0.0
    uy: float = 0.0
    vx: float = 0.0
    vy: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.ux, self.uy, self.vx, self.vy])

    @classmethod
    def from_array(cls, a) -> "ShapeParams":
        return cls(*(float(x) for x in a))

    @property
    def has_gradients(self) -> bool:
        return any((self.ux, self.uy, self.vx, self.vy))


@dataclass(frozen=True)
class MatchResult:
    subset: SubsetSpec
    params: ShapeParams
    cc: float
    iterations: int
    status: Status
    engine: str = "basic"
    # last accepted Newton step: |sum of changes| and max |change|
    step_sum: float = float("nan")
    step_max: float = float("nan")
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.CONVERGED
