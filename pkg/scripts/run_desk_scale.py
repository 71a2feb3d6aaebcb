"""Run every pipeline at desk scale through the CLI, one run directory each.

    python3 scripts/run_desk_scale.py --out runs [--mnist-dir DIR] [--seed 0]

MNIST pipelines are skipped (with a note) when the IDX files are absent.
"""

import argparse
import sys

from uconv.cli import main as cli
from uconv.idx import mnist_available


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--mnist-dir", default="data/mnist")
    ap.add_argument("--seed", default="0")
    args = ap.parse_args()
    common = ["--out", args.out, "--seed", args.seed]
    jobs = [["oracle-check"], ["gradcheck"], ["train-ccae"], ["train-mpnet"], ["pod-baseline"]]
    if mnist_available(args.mnist_dir):
        m = ["--set", f"mnist_dir={args.mnist_dir}"]
        jobs = [
            ["train-mnist", *m, "--set", "first_layer=continuous"],
            ["train-mnist", *m, "--set", "first_layer=discrete"],
            ["partial-sweep", *m],
        ] + jobs
    else:
        print(f"MNIST not found in {args.mnist_dir}; skipping train-mnist and partial-sweep")
    codes = []
    for job in jobs:
        print(f"== {' '.join(job)}", flush=True)
        codes.append(cli([*job, *common]))
    sys.exit(max(codes))


if __name__ == "__main__":
    main()
