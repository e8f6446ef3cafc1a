"""Experiment orchestration: config, protocol runs, result records and plot-ready CSVs."""

from __future__ import annotations

import csv
import gc
import hashlib
import json
import logging
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from distress import __version__
from distress.dic import default_search_radius, full_field, make_grid, min_subset_size
from distress.fields import DeformationField, field_from_dict
from distress.interp import build_spline
from distress.metrics import field_errors, strain_errors
from distress.strain import METHODS, strain_pipeline
from distress.synth import SpeckleSpec, make_image_pair

log = logging.getLogger(__name__)

ENGINE_CHOICES = ("basic", "extended", "both")
PAPER_SUBSETS = list(range(21, 102, 10))
DESK_SUBSETS = [21, 41, 61, 101]
INTERP_REPEATS = 9


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    field: dict = field(default_factory=lambda: {"type": "cantilever", "v_max": 0.005, "strict": False})
    r_a: float = 0.01
    r_d: float = 0.01
    seed: int = 1
    image_sizes: tuple[int, ...] = (500, 1000)
    subset_sizes: tuple[int, ...] = tuple(DESK_SUBSETS)
    grid_stride: int = 10
    engine: str = "both"
    # None: ceil(max true displacement in px) + 2
    search_radius: int | None = None
    strain_methods: tuple[str, ...] = ("diff", "smooth-then-diff", "gradients")
    out_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "image_sizes", tuple(int(s) for s in self.image_sizes))
        object.__setattr__(self, "subset_sizes", tuple(int(s) for s in self.subset_sizes))
        object.__setattr__(self, "strain_methods", tuple(self.strain_methods))
        if not self.image_sizes or not self.subset_sizes:
            raise ConfigError("image_sizes and subset_sizes must be non-empty")
        if any(s < 16 for s in self.image_sizes):
            raise ConfigError("image sizes must be at least 16 px")
        if any(s < 3 or s % 2 == 0 for s in self.subset_sizes):
            raise ConfigError(f"subset sizes must be odd and >= 3, got {self.subset_sizes}")
        if self.grid_stride < 1:
            raise ConfigError("grid_stride must be >= 1")
        if self.engine not in ENGINE_CHOICES:
            raise ConfigError(f"engine must be one of {ENGINE_CHOICES}")
        if self.search_radius is not None and self.search_radius < 1:
            raise ConfigError("search_radius must be positive")
        bad = [m for m in self.strain_methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown strain methods {bad}")
        if not (0 < self.r_a < 1 and 0 < self.r_d < 1):
            raise ConfigError("r_a and r_d must lie in (0, 1)")
        try:
            self.truth()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad field spec: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("image_sizes", "subset_sizes", "strain_methods"):
            d[k] = list(d[k])
        return d

    def canonical(self) -> str:
        """Sorted-key compact JSON; floats in shortest round-trip form."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def truth(self) -> DeformationField:
        return field_from_dict(self.field)

    def speckle(self) -> SpeckleSpec:
        return SpeckleSpec(self.r_a, self.r_d, self.seed)


def full_protocol(config: ExperimentConfig) -> ExperimentConfig:
    """The paper-scale grid: three image sizes, subsets 21..101 in steps of 10."""
    return replace(config, image_sizes=(500, 1000, 2000), subset_sizes=tuple(PAPER_SUBSETS))


@dataclass
class Cell:
    image_size: int
    subset_size: int
    engine: str
    stats: dict | None = None
    strain_rms: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    grid_shape: tuple[int, int] | None = None
    error: str | None = None


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    cells: list[Cell]
    wall_clock: dict
    version: str = __version__
    platform: str = field(default_factory=platform.platform)

    def cell(self, image_size: int, subset_size: int, engine: str) -> Cell | None:
        for c in self.cells:
            if (c.image_size, c.subset_size, c.engine) == (image_size, subset_size, engine):
                return c
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["cells"] = [Cell(**c) for c in d["cells"]]
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not serializable: {type(o)}")


def max_displacement_px(truth: DeformationField, image_size: int, n: int = 201) -> float:
    xs, ys = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    u, v = truth.displacement(xs, ys)
    return float(np.max(np.hypot(u, v))) * image_size


def interpolation_time(image: np.ndarray, repeats: int = INTERP_REPEATS) -> float:
    """Median over repeated spline builds; robust to both fast and stalled outliers."""
    samples = []
    gc.disable()  # as timeit does
    try:
        for _ in range(repeats):
            t = time.perf_counter()
            build_spline(image)
            samples.append(time.perf_counter() - t)
    finally:
        gc.enable()
    return float(np.median(samples))


def _warm_up() -> None:
    # compile numba kernels outside any timed region
    from distress.dic import ShapeParams, SubsetSpec, extended_dic

    img = (np.random.default_rng(0).random((24, 24)) * 255).astype(np.uint8)
    extended_dic(img, build_spline(img), SubsetSpec(12, 12, 3), ShapeParams())


def run_image_size(config: ExperimentConfig, image_size: int) -> tuple[list[Cell], dict]:
    """All (subset, engine) cells for one image size, sharing one image pair."""
    _warm_up()
    truth = config.truth()
    t0 = time.perf_counter()
    ref, dfm, _ = make_image_pair(config.speckle(), truth, image_size)
    clock = {"synth": time.perf_counter() - t0}
    radius = config.search_radius or default_search_radius(max_displacement_px(truth, image_size))
    engines = ("basic", "extended") if config.engine == "both" else (config.engine,)
    spline = build_spline(dfm) if "extended" in engines else None
    interp = interpolation_time(dfm) if spline is not None else 0.0
    ss_min = min_subset_size(image_size, config.r_a, config.r_d)
    cells = []
    for side in config.subset_sizes:
        if side < ss_min:
            warnings.warn(f"subset {side} is below the recommended minimum {ss_min} for {image_size} px images",
                          stacklevel=2)
        for engine in engines:
            cell = Cell(image_size, side, engine)
            try:
                grid = make_grid(ref.shape, side // 2, config.grid_stride, radius)
                tm: dict = {}
                res = full_field(ref, dfm, grid, engine, radius, spline, tm)
                tm["interp"] = interp if engine == "extended" else 0.0
                tm["per_subset"] = tm["match"] / len(res)
                stats = field_errors(res, truth, image_size, tm)
                cell.stats = stats.to_dict()
                cell.timings = tm
                cell.grid_shape = grid.shape
                for m in config.strain_methods:
                    if engine == "basic" and m.startswith("gradients"):
                        continue
                    try:
                        fg = strain_pipeline(m, res, grid.shape, side)
                        cell.strain_rms[m] = list(strain_errors(fg, truth, image_size))
                    except ValueError as exc:
                        cell.strain_rms[m] = None
                        log.warning("strain %s failed for %s: %s", m, (image_size, side, engine), exc)
            except Exception as exc:  # recorded per cell; the run continues
                cell.error = f"{type(exc).__name__}: {exc}"
                log.error("cell %s failed: %s", (image_size, side, engine), cell.error)
            cells.append(cell)
            log.info("done %s", (image_size, side, engine))
    return cells, clock


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RunRecord:
    """Run every protocol cell; image sizes are the units of parallel work."""
    t0 = time.perf_counter()
    sizes = list(config.image_sizes)
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_image_size, [config] * len(sizes), sizes))
    else:
        parts = [run_image_size(config, s) for s in sizes]
    cells = [c for part, _ in parts for c in part]
    wall = {f"synth_{s}": clock["synth"] for s, (_, clock) in zip(sizes, parts)}
    wall["total"] = time.perf_counter() - t0
    return RunRecord(config.hash(), config.to_dict(), cells, wall)


# plot data

_STAT_FILES = {
    "displacement_errors.csv": ["mean_abs_u", "std_u", "mean_abs_v", "std_v", "n_points", "n_failed", "flagged"],
    "e2e_errors.csv": ["mean_e2e", "std_e2e"],
    "iterations.csv": ["mean_iterations"],
}
_TIMING_FILES = {
    "time_per_subset.csv": ["per_subset", "match", "seed"],
    "interpolation_time.csv": ["interp"],
}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(x)
    return str(x)


def emit_plot_data(record: RunRecord, out_dir) -> list[Path]:
    """One CSV per figure analogue; missing cells become empty fields.

    Error, iteration and strain files are deterministic for a fixed config;
    timing files are not.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = record.config
    engines = ("basic", "extended") if cfg["engine"] == "both" else (cfg["engine"],)
    keys = [(n, s, e) for n in cfg["image_sizes"] for s in cfg["subset_sizes"] for e in engines]
    written = []

    def write(name, header, rows):
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    for name, cols in _STAT_FILES.items():
        rows = []
        for n, s, e in keys:
            if name == "iterations.csv" and e != "extended":
                continue
            c = record.cell(n, s, e)
            st = c.stats if c and c.stats else {}
            rows.append([n, s, e] + [_fmt(st.get(k)) for k in cols])
        write(name, ["image_size", "subset_size", "engine"] + cols, rows)

    for name, cols in _TIMING_FILES.items():
        rows = []
        for n, s, e in keys:
            if name == "interpolation_time.csv" and e != "extended":
                continue
            c = record.cell(n, s, e)
            tm = c.timings if c else {}
            rows.append([n, s, e] + [_fmt(tm.get(k)) for k in cols])
        write(name, ["image_size", "subset_size", "engine"] + cols, rows)

    rows = []
    for n, s, e in keys:
        c = record.cell(n, s, e)
        for m in cfg["strain_methods"]:
            if e == "basic" and m.startswith("gradients"):
                continue
            rms = (c.strain_rms.get(m) if c else None) or [None, None, None]
            rows.append([n, s, e, m] + [_fmt(r) for r in rms])
    write("strain_rms.csv", ["image_size", "subset_size", "engine", "method", "rms_ex", "rms_ey", "rms_gxy"], rows)
    return written


def run_and_save(config: ExperimentConfig, out_dir, workers: int = 1) -> RunRecord:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = run_experiment(config, workers)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    record.save(out / "record.json")
    emit_plot_data(record, out)
    return record
