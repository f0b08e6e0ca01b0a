"""Convergence tables for every mesh family, order and mass choice.

Usage: python scripts/reproduce_tables.py [--outdir results] [--quick]
Each run writes convergence.csv / convergence.md / config.json into its own
subdirectory and the markdown tables are echoed to stdout.
"""
import argparse
import logging
import warnings
from pathlib import Path

from acvem.config import RunConfig
from acvem.harness import run_experiment

RUNS = [
    dict(family="square", order=0, levels=(1, 2, 3, 4)),
    dict(family="triangular", order=0, levels=(1, 2, 3, 4)),
    dict(family="trapezoidal", order=0, levels=(1, 2, 3, 4)),
    dict(family="voronoi", order=0, levels=(1, 2, 3, 4)),
    dict(family="hexagonal", order=0, levels=(1, 2, 3, 4)),
    dict(family="voronoi", order=0, levels=(1, 2, 3, 4), stabilized=True),
    dict(family="hexagonal", order=0, levels=(1, 2, 3, 4), stabilized=True),
    dict(family="triangular", order=1, levels=(1, 2, 3)),
    dict(family="triangular", order=2, levels=(1, 2, 3)),
    dict(family="triangular", order=3, levels=(1, 2)),
    dict(domain="lshape", family="triangular", order=0, levels=(1, 2, 3, 4), n_eigs=5),
    dict(domain="lshape", family="triangular", order=1, levels=(1, 2, 3, 4), n_eigs=5),
    dict(domain="lshape", family="triangular", order=2, levels=(1, 2, 3, 4), n_eigs=5),
    dict(domain="lshape", family="square", order=0, levels=(4, 5, 6, 7, 8), n_eigs=5),
]


def name(run: dict) -> str:
    mass = "s" if run.get("stabilized") else "ns"
    return f"{run.get('domain', 'rect')}_{run['family']}_k{run['order']}_{mass}"


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", type=Path, default=Path("results"))
    p.add_argument("--quick", action="store_true", help="drop the finest level of every run")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for run in RUNS:
        run = dict(run)
        if args.quick:
            run["levels"] = run["levels"][:-1]
        cfg = RunConfig(**run, outdir=str(args.outdir / name(run)))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = run_experiment(cfg)
        print(f"\n## {name(run)}\n")
        print(table.to_markdown())
        for w in caught:
            print(f"note: {w.message}")


if __name__ == "__main__":
    main()
