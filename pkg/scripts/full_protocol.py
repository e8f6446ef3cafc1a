#!/usr/bin/env python3
"""Paper-scale protocol: 500/1000/2000 px images, subsets 21..101 in steps of 10."""

import argparse
import logging
from pathlib import Path

from distress.harness import ExperimentConfig, full_protocol, run_and_save

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=ROOT / "configs" / "desk.json", help="base config; sizes are overridden")
    p.add_argument("--out-dir", default="results/full")
    p.add_argument("--stride", type=int, default=None, help="grid stride (default: the config's)")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = full_protocol(ExperimentConfig.load(args.config))
    if args.stride:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "grid_stride": args.stride})
    rec = run_and_save(cfg, args.out_dir, workers=args.workers)
    bad = [c for c in rec.cells if c.error]
    print(f"{len(rec.cells)} cells, {len(bad)} failed, {rec.wall_clock['total']:.1f} s -> {args.out_dir}")


if __name__ == "__main__":
    main()
