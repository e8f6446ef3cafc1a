"""Zero-normalized correlation criteria and the minimum subset size rule."""

from __future__ import annotations

import math
import warnings

import numpy as np

from distress.dic.model import DegenerateSubsetError


def _normalized(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    centered = a - a.mean()
    norm = math.sqrt(float(centered @ centered))
    # constant subsets give exactly zero; allow for float noise on non-integer data
    if norm <= 1e-12 * math.sqrt(a.size) * max(1.0, abs(float(a.mean()))):
        raise DegenerateSubsetError("subset has no intensity variation")
    return centered / norm


def zncc(f, g) -> float:
    """Zero-normalized cross-correlation of two equally shaped subsets."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"subset shapes differ: {f.shape} vs {g.shape}")
    return float(_normalized(f) @ _normalized(g))


def znssd(f, g) -> float:
    """Zero-normalized sum of squared differences; equals 2 - 2 zncc."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"subset shapes differ: {f.shape} vs {g.shape}")
    d = _normalized(f) - _normalized(g)
    return float(d @ d)


def min_subset_size(image_size: int, r_a: float, r_d: float) -> int:
    """Smallest recommended odd subset side, ``image_size * (2 r_a - r_d)`` rounded up.

    The rule is meant for comparable speckle spacing and size; a warning is
    issued when they differ by more than half the larger one.
    """
    if abs(r_a - r_d) > 0.5 * max(r_a, r_d):
        warnings.warn(f"min_subset_size assumes r_a ~ r_d, got r_a={r_a}, r_d={r_d}", stacklevel=2)
    raw = image_size * (2 * r_a - r_d)
    if raw <= 0:
        raise ValueError(f"non-positive minimum subset size {raw} for r_a={r_a}, r_d={r_d}")
    size = math.ceil(raw - 1e-9 * max(1.0, raw))
    return size if size % 2 == 1 else size + 1
