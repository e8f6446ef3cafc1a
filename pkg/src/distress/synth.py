"""Speckle-pattern image synthesis with exact ground truth.

The specimen surface is the unit square. It is divided into cells of
pitch ``r_a``; one rigid circular speckle of diameter ``r_d`` is dropped
uniformly at random inside each cell. Images are rendered by area
coverage: bright speckles (255) on a dark background (0), overlapping
speckles saturate rather than add.

Pixel ``(row j, col i)`` is the unit square centred on pixel coordinate
``(i, j)``; pixel coordinate ``p`` corresponds to specimen coordinate
``p / image_size``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from distress.fields import DeformationField

RNG_NAME = "numpy.random.PCG64"
SUPERSAMPLE = 16
MAX_SPECKLES = 4_000_000


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpeckleSpec:
    r_a: float = 0.01
    r_d: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.r_a <= 1 and 0 < self.r_d <= 1):
            raise ValueError(f"r_a and r_d must lie in (0, 1], got {self.r_a}, {self.r_d}")


@dataclass(frozen=True)
class SpeckleField:
    centers: np.ndarray  # (n, 2) of (x, y) in specimen units
    radius: float
    grid_pitch: float

    def __len__(self):
        return len(self.centers)


def cells_per_side(r_a: float) -> int:
    # guard against 1/0.01 = 100.00000000000001 style rounding
    return math.ceil(1.0 / r_a - 1e-9)


def generate_speckles(spec: SpeckleSpec, max_speckles: int = MAX_SPECKLES) -> SpeckleField:
    n = cells_per_side(spec.r_a)
    if n * n > max_speckles:
        raise ResourceError(f"{n * n} speckles exceeds cap of {max_speckles}")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    jitter = rng.random((n, n, 2))
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = (cols + jitter[..., 0]) * spec.r_a
    y = (rows + jitter[..., 1]) * spec.r_a
    centers = np.clip(np.stack([x.ravel(), y.ravel()], axis=1), 0.0, 1.0)
    return SpeckleField(centers=centers, radius=spec.r_d / 2, grid_pitch=spec.r_a)


def _split(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    whole = np.floor(values)
    return whole.astype(np.int64), values - whole


@numba.njit(cache=True)
def _rasterize_kernel(ix, iy, fx, fy, r, width, height, ss):
    img = np.zeros((height, width), dtype=np.uint8)
    full = np.zeros((height, width), dtype=np.bool_)
    r2 = r * r
    n = ix.shape[0]

    # pass 1: fully covered pixels, and (pixel, disk) pairs needing sampling
    cap = 1024
    pair_pix = np.empty(cap, dtype=np.int64)
    pair_disk = np.empty(cap, dtype=np.int64)
    npairs = 0
    for k in range(n):
        lo_x = ix[k] + int(math.ceil(fx[k] - r - 0.5))
        hi_x = ix[k] + int(math.floor(fx[k] + r + 0.5))
        lo_y = iy[k] + int(math.ceil(fy[k] - r - 0.5))
        hi_y = iy[k] + int(math.floor(fy[k] + r + 0.5))
        for j in range(max(lo_y, 0), min(hi_y, height - 1) + 1):
            py = (j - iy[k]) - fy[k]
            ay = abs(py)
            ny = max(ay - 0.5, 0.0)
            for i in range(max(lo_x, 0), min(hi_x, width - 1) + 1):
                if full[j, i]:
                    continue
                px = (i - ix[k]) - fx[k]
                ax = abs(px)
                nx = max(ax - 0.5, 0.0)
                if nx * nx + ny * ny >= r2:
                    continue
                if (ax + 0.5) ** 2 + (ay + 0.5) ** 2 <= r2:
                    full[j, i] = True
                    continue
                if npairs == cap:
                    cap *= 2
                    tmp = np.empty(cap, dtype=np.int64)
                    tmp[:npairs] = pair_pix[:npairs]
                    pair_pix = tmp
                    tmp = np.empty(cap, dtype=np.int64)
                    tmp[:npairs] = pair_disk[:npairs]
                    pair_disk = tmp
                pair_pix[npairs] = j * width + i
                pair_disk[npairs] = k
                npairs += 1

    for j in range(height):
        for i in range(width):
            if full[j, i]:
                img[j, i] = 255

    # pass 2: supersample boundary pixels against every disk touching them
    order = np.argsort(pair_pix[:npairs], kind="mergesort")
    total = ss * ss
    a = 0
    while a < npairs:
        pix = pair_pix[order[a]]
        b = a
        while b < npairs and pair_pix[order[b]] == pix:
            b += 1
        j = pix // width
        i = pix - j * width
        if not full[j, i]:
            count = 0
            for sy in range(ss):
                oy = (sy + 0.5) / ss - 0.5
                for sx in range(ss):
                    ox = (sx + 0.5) / ss - 0.5
                    for t in range(a, b):
                        k = pair_disk[order[t]]
                        dx = ((i - ix[k]) - fx[k]) + ox
                        dy = ((j - iy[k]) - fy[k]) + oy
                        if dx * dx + dy * dy < r2:
                            count += 1
                            break
            img[j, i] = np.uint8(math.floor(255.0 * count / total + 0.5))
        a = b
    return img


def rasterize_disks(centers_px: np.ndarray, radius_px: float, width: int, height: int,
                    shift_px: np.ndarray | None = None) -> np.ndarray:
    """Render disks given in pixel coordinates; ``shift_px`` is added per disk.

    Whole-pixel parts of centres and shifts are carried as integers so an
    integral shift moves every disk by exactly that many pixels.
    """
    centers_px = np.asarray(centers_px, dtype=float).reshape(-1, 2)
    ix, fx = _split(centers_px[:, 0])
    iy, fy = _split(centers_px[:, 1])
    if shift_px is not None:
        shift_px = np.asarray(shift_px, dtype=float).reshape(-1, 2)
        sx = np.round(shift_px[:, 0])
        sy = np.round(shift_px[:, 1])
        ix = ix + sx.astype(np.int64)
        iy = iy + sy.astype(np.int64)
        fx = fx + (shift_px[:, 0] - sx)
        fy = fy + (shift_px[:, 1] - sy)
    return _rasterize_kernel(ix, iy, fx, fy, float(radius_px), int(width), int(height), SUPERSAMPLE)


def rasterize(speckles: SpeckleField, displacement: DeformationField | None, image_size: int) -> np.ndarray:
    """Render the speckle field as an ``image_size``-square uint8 image.

    With a displacement field, each speckle is translated rigidly by the
    displacement evaluated at its undeformed centre.
    """
    if image_size < 16:
        raise ValueError("image_size must be at least 16")
    if len(speckles) == 0:
        raise ValueError("empty speckle field")
    centers_px = speckles.centers * image_size
    shift = None
    if displacement is not None:
        u, v = displacement.displacement(speckles.centers[:, 0], speckles.centers[:, 1])
        shift = np.stack([np.broadcast_to(u, len(speckles)), np.broadcast_to(v, len(speckles))], axis=1) * image_size
    return rasterize_disks(centers_px, speckles.radius * image_size, image_size, image_size, shift)


def make_image_pair(spec: SpeckleSpec, field: DeformationField, image_size: int):
    """Reference and deformed images of one speckle field, plus the truth field."""
    speckles = generate_speckles(spec)
    reference = rasterize(speckles, None, image_size)
    deformed = rasterize(speckles, field, image_size)
    return reference, deformed, field


def pixel_to_specimen(p, image_size: int):
    return np.asarray(p, dtype=float) / image_size
