"""Run the desk-scale pipeline on every dataset found on disk.

Usage: python scripts/run_desk_pipeline.py --seed 0 --out runs/desk [--data-dir DIR] [--jobs 4]

Each available task is evolved as a source, transferred to all available
tasks and compared with the matched random baseline.  Tables, JSON reports
and a manifest land in ``--out``.
"""

import argparse
import sys
from pathlib import Path

from bgtransfer.dataio import load_task
from bgtransfer.evolve import EvolutionConfig
from bgtransfer.experiment import run_pipeline

TASKS = ("australian", "german", "banknote")
REPO_DATA = Path(__file__).resolve().parents[1] / "data"


def available_tasks(data_dir, seed):
    tasks = {}
    for name in TASKS:
        for d in (data_dir, REPO_DATA):
            try:
                tasks[name] = load_task(name, d, seed=seed)
                break
            except FileNotFoundError:
                continue
        else:
            print(f"skipping {name}: no data file found", file=sys.stderr)
    return tasks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--data-dir", type=Path, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=2)
    args = ap.parse_args()

    tasks = available_tasks(args.data_dir, args.seed)
    if not tasks:
        sys.exit("no datasets available")
    config = EvolutionConfig.desk(args.seed, jobs=args.jobs)
    reports = run_pipeline(list(tasks), tasks, config, args.out, repeats=args.repeats)
    for rep in reports:
        errors = ", ".join(f"{t} {rep.error(t):.2f}%" for t in rep.targets)
        print(f"{type(rep).__name__} {rep.label}: test error {errors}")


if __name__ == "__main__":
    main()
