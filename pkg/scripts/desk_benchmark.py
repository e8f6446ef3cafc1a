#!/usr/bin/env python3
"""Desk-scale benchmark: 500 and 1000 px images, subsets 21/41/61/101, stride 25."""

import argparse
import logging
from pathlib import Path

from distress.harness import ExperimentConfig, run_and_save

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=ROOT / "configs" / "desk.json")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = ExperimentConfig.load(args.config)
    out = args.out_dir or cfg.out_dir
    rec = run_and_save(cfg, out, workers=args.workers)
    for c in rec.cells:
        s = c.stats or {}
        print(f"{c.image_size:5d} {c.subset_size:4d} {c.engine:9s} e2e={s.get('mean_e2e', float('nan')):.4f} "
              f"iters={s.get('mean_iterations', float('nan')):.2f} failed={s.get('n_failed', '-')}"
              + (f" ERROR {c.error}" if c.error else ""))
    print(f"wrote {out} in {rec.wall_clock['total']:.1f} s")


if __name__ == "__main__":
    main()
