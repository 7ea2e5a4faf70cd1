"""Howard-Newman headline runs: concentration, KPZ ratio, non-random
fluctuation, left tail and transversal tails from one shared sample log.

    python scripts/headline.py --out runs/headline --n 64 128 256 --samples 2000

Every experiment writes its own directory; samples are shared through the
task seeds, so repeated p2p tasks produce identical values across runs.
"""
import argparse
import sys
from pathlib import Path

from fpplab.config import config_from_dict, default_workers
from fpplab.runner import execute, report

RUNS = ("concentration", "kpz", "nonrandom", "lowertail", "tf_tail")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/headline")
    ap.add_argument("--model", default="howard_newman")
    ap.add_argument("--n", type=float, nargs="+", default=[64, 128, 256])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--mu-scale", type=float, nargs="*", default=[1024])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args(argv)
    worst = 0
    for exp in RUNS:
        cfg = config_from_dict({
            "experiment": exp, "seed": args.seed, "workers": args.workers,
            "output_dir": str(Path(args.out) / exp), "resume": args.resume,
            "model": {"kind": args.model},
            "plan": {"n_grid": args.n, "samples_per_n": args.samples,
                     "mu_scales": args.mu_scale, "mu_samples": 200}})
        worst = max(worst, execute(cfg))
    report(args.out)
    return worst


if __name__ == "__main__":
    sys.exit(main())
