"""Run every experiment with the configs in scripts/configs and print one summary line each.

    python scripts/run_all.py [--out runs] [--workers 1] [--only decay wall-law ...]

The long runs (clt, couple, scalar-couple) dominate; see README for timings."""

import argparse
import json
from pathlib import Path

from roughbl.cli import ExperimentConfig, run

HERE = Path(__file__).resolve().parent
ORDER = ["kernels-check", "gen-boundary", "cell", "decay", "alpha", "wall-law", "green",
         "optimality", "scalar-clt", "scalar-couple", "clt", "couple"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", default=None)
    args = ap.parse_args()
    for exp in args.only or ORDER:
        cfg = ExperimentConfig.from_file(HERE / "configs" / f"{exp}.yaml",
                                         out=str(Path(args.out) / exp), workers=args.workers)
        man = run(cfg)
        print(f"{exp:14s} {man.wall_clock:8.1f}s  {json.dumps(man.summary, default=str, sort_keys=True)}",
              flush=True)


if __name__ == "__main__":
    main()
