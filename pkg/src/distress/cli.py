"""Command-line entry point: synth, match, bench, strain, verify."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from distress.dic import MatchResult, ShapeParams, Status, SubsetSpec, full_field, make_grid
from distress.dic.full_field import default_search_radius
from distress.fields import field_from_dict
from distress.harness import ConfigError, ExperimentConfig, full_protocol, max_displacement_px, run_and_save
from distress.metrics import field_errors, strain_errors
from distress.pgm import ImageFormatError, read_pgm, read_sidecar, write_pgm, write_png, write_sidecar
from distress.strain import METHODS, strain_pipeline
from distress.synth import make_image_pair

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

RESULT_COLUMNS = ["row", "col", "x", "y", "half_size", "engine", "status", "u", "v", "ux", "uy", "vx", "vy",
                  "cc", "iterations"]


class UsageError(Exception):
    pass


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "full_protocol", False):
        cfg = full_protocol(cfg)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "engine", None):
        over["engine"] = args.engine
    if args.out_dir:
        over["out_dir"] = args.out_dir
    return ExperimentConfig.from_dict({**cfg.to_dict(), **over}) if over else cfg


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = cfg.truth()
    for n in cfg.image_sizes:
        ref, dfm, _ = make_image_pair(cfg.speckle(), truth, n)
        write_pgm(out / f"ref_{n}.pgm", ref)
        write_pgm(out / f"def_{n}.pgm", dfm)
        if args.png:
            write_png(out / f"ref_{n}.png", ref)
            write_png(out / f"def_{n}.png", dfm)
        meta = {"seed": cfg.seed, "r_a": cfg.r_a, "r_d": cfg.r_d, "image_size": n, "field": truth.to_dict()}
        meta["amplitude_scale"] = meta["field"].get("amplitude_scale", 1.0)
        write_sidecar(out / f"pair_{n}.json", meta)
        print(f"wrote {out}/ref_{n}.pgm, def_{n}.pgm, pair_{n}.json")
    return EXIT_OK


def write_results(path, results: list[MatchResult], shape) -> None:
    rows, cols = shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for k, r in enumerate(results):
            p = r.params
            w.writerow([k // cols, k % cols, r.subset.x, r.subset.y, r.subset.half_size, r.engine, r.status.value,
                        repr(p.u), repr(p.v), repr(p.ux), repr(p.uy), repr(p.vx), repr(p.vy), repr(r.cc),
                        r.iterations])


def read_results(path) -> tuple[list[MatchResult], tuple[int, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(RESULT_COLUMNS) - set(rows[0]):
        raise ImageFormatError(f"{path}: not a results file")
    out = [MatchResult(SubsetSpec(int(r["x"]), int(r["y"]), int(r["half_size"])),
                       ShapeParams(*(float(r[k]) for k in ("u", "v", "ux", "uy", "vx", "vy"))),
                       float(r["cc"]), int(r["iterations"]), Status(r["status"]), r["engine"]) for r in rows]
    shape = (max(int(r["row"]) for r in rows) + 1, max(int(r["col"]) for r in rows) + 1)
    return out, shape


def cmd_match(args) -> int:
    ref = read_pgm(args.reference)
    dfm = read_pgm(args.deformed)
    if ref.shape != dfm.shape:
        raise ImageFormatError(f"image shapes differ: {ref.shape} vs {dfm.shape}")
    truth = None
    n = ref.shape[1]
    if args.truth:
        meta = read_sidecar(args.truth)
        truth = field_from_dict(meta["field"])
        n = int(meta["image_size"])
    if args.subset % 2 == 0 or args.subset < 3:
        raise UsageError("--subset must be odd and >= 3")
    if args.search_radius is not None:
        radius = args.search_radius
    elif truth is not None:
        radius = default_search_radius(max_displacement_px(truth, n))
    else:
        raise UsageError("--search-radius is required without truth metadata")
    engine = args.engine or "extended"
    if engine == "both":
        raise UsageError("match runs one engine; choose basic or extended")
    grid = make_grid(ref.shape, args.subset // 2, args.stride, radius)
    tm: dict = {}
    res = full_field(ref, dfm, grid, engine, radius, timings=tm)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", res, grid.shape)
    report = {"engine": engine, "grid": list(grid.shape), "subset": args.subset, "search_radius": radius,
              "converged": sum(r.ok for r in res), "points": len(res)}
    if truth is not None:
        report["errors"] = field_errors(res, truth, n, tm).to_dict()
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    record = run_and_save(cfg, cfg.out_dir, workers=args.workers)
    failed = [c for c in record.cells if c.error]
    print(f"wrote {cfg.out_dir}/record.json ({len(record.cells)} cells, {len(failed)} failed, "
          f"{record.wall_clock['total']:.1f} s)")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_strain(args) -> int:
    res, shape = read_results(args.results)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    truth = None
    if args.truth:
        meta = read_sidecar(args.truth)
        truth, n = field_from_dict(meta["field"]), int(meta["image_size"])
    subset = 2 * res[0].subset.half_size + 1
    summary = {}
    for m in args.method or ["diff"]:
        fg = strain_pipeline(m, res, shape, subset)
        path = out / f"strain_{m}.csv"
        x, y = fg.coords()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "valid", "ex", "ey", "gxy"])
            for idx in np.ndindex(fg.shape):
                w.writerow([x[idx], y[idx], int(fg.mask[idx])] + [repr(float(fg[k][idx])) for k in ("ex", "ey", "gxy")])
        if truth is not None:
            summary[m] = dict(zip(("rms_ex", "rms_ey", "rms_gxy"), strain_errors(fg, truth, n)))
        print(f"wrote {path}")
    if summary:
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    from distress.acceptance import run_all

    results = run_all(echo=lambda line: print(line, flush=True))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="distress", description="Synthetic speckle DIC benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write reference/deformed PGM pairs and metadata")
    s.add_argument("--png", action="store_true", help="also write PNG copies")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("match", parents=[common], help="run one engine on a PGM pair")
    m.add_argument("reference")
    m.add_argument("deformed")
    m.add_argument("--truth", help="sidecar JSON with the true field; enables error metrics")
    m.add_argument("--engine", choices=["basic", "extended"])
    m.add_argument("--subset", type=int, default=41)
    m.add_argument("--stride", type=int, default=10)
    m.add_argument("--search-radius", type=int)
    m.set_defaults(func=cmd_match)

    b = sub.add_parser("bench", parents=[common], help="run the benchmark protocol")
    b.add_argument("--engine", choices=["basic", "extended", "both"])
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--full-protocol", action="store_true", help="500/1000/2000 px, subsets 21..101")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("strain", parents=[common], help="strain fields from a results CSV")
    t.add_argument("results")
    t.add_argument("--method", action="append", choices=METHODS)
    t.add_argument("--truth", help="sidecar JSON; enables RMS errors")
    t.set_defaults(func=cmd_strain)

    v = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (ImageFormatError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        return _fail("input", f"{type(exc).__name__}: {exc}", EXIT_INPUT)
    except Exception as exc:  # noqa: BLE001
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
