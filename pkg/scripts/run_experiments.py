#!/usr/bin/env python3
"""Run the preset experiment battery and drop CSVs + manifests in one place.

Desk-scale by default (quarter-size filters, 20 trials) so the whole
battery finishes in a few minutes; pass --full for the full-size runs
(budget roughly an hour, dominated by exp4/exp5 learning curves).

Examples:
    python3 scripts/run_experiments.py --out results/
    python3 scripts/run_experiments.py --only exp1 exp2 --trials 50
    python3 scripts/run_experiments.py --full --workers 8 --out results/full
"""

import argparse
import sys
import time

from sparselms.cli import PRESET_NAMES, main as cli_main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--only", nargs="+", metavar="NAME", default=None,
                   choices=PRESET_NAMES, help="subset of presets to run")
    p.add_argument("--full", action="store_true",
                   help="full-size runs (default is --scale 0.25)")
    p.add_argument("--trials", type=int, default=20,
                   help="Monte Carlo trials per point (default 20; "
                        "ignores --scale's trial scaling)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel trial workers")
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument("--theory-only", action="store_true",
                   help="skip the Monte Carlo side entirely")
    return p.parse_args()


def run():
    args = parse_args()
    presets = args.only or list(PRESET_NAMES)
    mode = "theory" if args.theory_only else "experiment"
    worst = 0
    for name in presets:
        argv = [mode, "--preset", name, "--out", args.out,
                "--trials", str(args.trials), "--workers", str(args.workers)]
        if not args.full:
            argv += ["--scale", "0.25"]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        print(f"=== {name} ({'full' if args.full else 'desk'} scale) ===")
        t0 = time.perf_counter()
        rc = cli_main(argv)
        print(f"=== {name} done in {time.perf_counter() - t0:.1f} s "
              f"(exit {rc}) ===\n")
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(run())
