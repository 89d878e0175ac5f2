"""Command-line entry point: ``bgtransfer <subcommand> [options]``.

Every stage takes ``--seed`` (except ``report``, which only re-formats
existing results), ``--jobs`` (or ``$BGT_JOBS``) and, where data is read,
``--data-dir`` (or ``$BGT_DATA_DIR``).  ``--desk`` selects the small preset
(N=40, G=5, 100 epochs, 2 repeats); explicit flags override it.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import calibrate as cal
from . import experiment as exp
from .dataio import DATA_DIR_ENV, TASKS, load_dataset, load_task, preprocess, read_task_csv, task_spec, write_task_csv
from .evolve import EvolutionConfig, evolve_source, merge_final, read_population, write_population
from .relatedness import relatedness, train_reference_nets

JOBS_ENV = "BGT_JOBS"
DESK_REPEATS = 2
FULL_REPEATS = 4

log = logging.getLogger("bgtransfer")


class ConfigError(ValueError):
    pass


# key -> (EvolutionConfig field, parser)
_CONFIG_KEYS = {
    "pop_size": ("population_size", int),
    "population_size": ("population_size", int),
    "generations": ("generations", int),
    "epochs": ("epochs", int),
    "seed": ("master_seed", int),
    "top_fraction": ("top_fraction", float),
    "mid_fraction": ("mid_fraction", float),
    "mutation_rate": ("mutation_rate", float),
    "fitness_split": ("fitness_split", str),
    "jobs": ("jobs", int),
}


def load_config(path, seed: int | None = None) -> tuple[EvolutionConfig, dict[str, Path]]:
    """Parse a ``key = value`` file into an EvolutionConfig and task paths.

    Unspecified keys keep the full-scale defaults.  ``path.<task>`` keys give
    dataset files; ``data_dir`` gives a directory to search.  A seed must
    come from the file or the ``seed`` argument (which wins).
    """
    values: dict = {}
    paths: dict[str, Path] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("path."):
            task_spec(key[5:])
            paths[key[5:]] = Path(value)
        elif key == "data_dir":
            paths["data_dir"] = Path(value)
        elif key in _CONFIG_KEYS:
            name, parse = _CONFIG_KEYS[key]
            try:
                values[name] = parse(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: {key} expects {parse.__name__}, got {value!r}") from None
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    if seed is not None:
        values["master_seed"] = seed
    if values.get("master_seed") is None:
        raise ConfigError(f"{path}: no seed given (set seed = ... or pass --seed)")
    try:
        return EvolutionConfig(**values), paths
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _common(sub):
    sub.add_argument("--seed", type=int, help="master seed (required unless set in --config)")
    sub.add_argument("--jobs", type=int, default=None, help=f"worker threads (default ${JOBS_ENV} or 1)")
    sub.add_argument("--desk", action="store_true", help="N=40, G=5, epochs=100, 2 repeats")
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument("--data-dir", help=f"dataset directory (default ${DATA_DIR_ENV})")
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgtransfer", description="Twin-study neuroevolution and transfer experiments.")
    subs = p.add_subparsers(dest="command", required=True, metavar="command")

    s = subs.add_parser("preprocess", help="encode, normalise, pad and split one dataset")
    _common(s)
    s.add_argument("--task", required=True, choices=sorted(TASKS))
    s.add_argument("--input", required=True, help="raw UCI file")
    s.add_argument("--out", required=True, help="output CSV")

    s = subs.add_parser("calibrate", help="grid search and bounds extraction")
    _common(s)
    s.add_argument("--task", required=True, choices=sorted(TASKS))
    s.add_argument("--grid", required=True, help="JSON file of per-gene value lists")
    s.add_argument("--quantile", type=float, default=cal.DEFAULT_QUANTILE)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", help="bounds JSON (default: print)")

    s = subs.add_parser("evolve", help="dual-population twin evolution on a source task")
    _common(s)
    s.add_argument("--task", required=True, choices=sorted(TASKS))
    s.add_argument("--pop-size", type=int)
    s.add_argument("--generations", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--bounds", help="bounds JSON from calibrate")
    s.add_argument("--out", required=True, help="output directory")

    s = subs.add_parser("transfer", help="train an evolved population on target tasks")
    _common(s)
    s.add_argument("--source", required=True, choices=sorted(TASKS))
    s.add_argument("--targets", required=True, help="comma-separated task names")
    s.add_argument("--pop", required=True, help="population JSONL or an evolve output directory")
    s.add_argument("--epochs", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--out", required=True, help="output directory")

    s = subs.add_parser("baseline", help="random genomes trained once on target tasks")
    _common(s)
    s.add_argument("--targets", required=True, help="comma-separated task names")
    s.add_argument("--source", choices=sorted(TASKS), help="draw genomes from this task's bounds")
    s.add_argument("--pop-size", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--out", required=True, help="output directory")

    s = subs.add_parser("relatedness", help="task distance matrix from reference nets")
    _common(s)
    s.add_argument("--tasks", default=",".join(TASKS), help="comma-separated task names")
    s.add_argument("--count", type=int, default=None, help="reference nets per task (default: repeats)")
    s.add_argument("--hidden", type=int, default=100)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True, help="output CSV")

    s = subs.add_parser("report", help="emit tables from transfer/baseline reports")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out", help="output directory (default: --in)")
    s.add_argument("-v", "--verbose", action="store_true")
    return p


def _task_names(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise ConfigError("empty task list")
    for n in names:
        task_spec(n)
    return names


class _Context:
    """Resolved configuration shared by the data-reading subcommands."""

    def __init__(self, args):
        paths: dict[str, Path] = {}
        if args.config:
            config, paths = load_config(args.config, args.seed)
        elif args.seed is None:
            raise ConfigError("--seed is required")
        else:
            config = EvolutionConfig(master_seed=args.seed)
        if args.desk:
            config = replace(config, population_size=40, generations=5, epochs=100)
        jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, config.jobs))
        overrides = {"jobs": jobs}
        for flag, name in (("pop_size", "population_size"), ("generations", "generations"), ("epochs", "epochs")):
            if getattr(args, flag, None) is not None:
                overrides[name] = getattr(args, flag)
        self.config = replace(config, **overrides)
        self.repeats = getattr(args, "repeats", None) or (DESK_REPEATS if args.desk else FULL_REPEATS)
        self.data_dir = args.data_dir or paths.get("data_dir") or os.environ.get(DATA_DIR_ENV)
        self.paths = paths

    def task(self, name: str):
        """Preprocessed ``<name>.csv`` if present, else the raw dataset file."""
        seed = self.config.seed()
        if name in self.paths:
            return preprocess(load_dataset(name, self.paths[name]), seed=seed)
        if self.data_dir and (Path(self.data_dir) / f"{name}.csv").is_file():
            return read_task_csv(Path(self.data_dir) / f"{name}.csv", name, task_spec(name).d_native)
        return load_task(name, self.data_dir, seed=seed)


def cmd_preprocess(args, ctx: _Context) -> None:
    data = preprocess(load_dataset(args.task, args.input), seed=ctx.config.seed())
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_task_csv(data, args.out)
    log.info("%s: %d rows -> %s", args.task, data.n, args.out)


def cmd_calibrate(args, ctx: _Context) -> None:
    grid = cal.read_grid(args.grid)
    epochs = args.epochs if args.epochs is not None else ctx.config.epochs
    scored = cal.grid_search(ctx.task(args.task), grid, ctx.config.seed(), epochs, ctx.config.jobs)
    bounds = cal.derive_bounds(scored, args.quantile)
    if args.out:
        cal.write_bounds({args.task: bounds}, args.out)
    else:
        print(bounds.to_dict())


def cmd_evolve(args, ctx: _Context) -> None:
    config = ctx.config
    if args.bounds:
        found = cal.read_bounds(args.bounds)
        if args.task not in found:
            raise ConfigError(f"{args.bounds} has no bounds for {args.task}")
        config = replace(config, bounds=found[args.task])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = ctx.task(args.task)
    result = evolve_source(task, config, on_generation=lambda g, s, _: log.info(
        "generation %d: mean fitness %s", g, [round(x.mean_fitness, 3) for x in s]))
    write_population(result.pop_a, out / "pop_a.jsonl")
    write_population(result.pop_b, out / "pop_b.jsonl")
    if config.generations > 0:
        write_population(merge_final(result.pop_a, result.pop_b, config, config.bounds_for(args.task)),
                         out / "merged.jsonl")
    with open(out / "stats.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "population", "mean_fitness", "best_fitness", "n_divergent", "n_mz", "n_dz"])
        for s in result.stats:
            w.writerow([s.generation, s.population, repr(s.mean_fitness), repr(s.best_fitness),
                        s.n_divergent, s.n_mz, s.n_dz])
    exp.write_manifest(out / "manifest.json", config, command="evolve", task=args.task)


def cmd_transfer(args, ctx: _Context) -> None:
    pop_path = Path(args.pop)
    if pop_path.is_dir():
        pop_path = pop_path / "merged.jsonl"
    if not pop_path.is_file():
        raise FileNotFoundError(f"no source population at {pop_path}")
    config = ctx.config if args.epochs is None else replace(ctx.config, epochs=args.epochs)
    targets = {t: ctx.task(t) for t in _task_names(args.targets)}
    report = exp.run_transfer(args.source, read_population(pop_path), targets, config, ctx.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    exp.write_report(report, out / f"transfer_{args.source}.json")
    exp.write_manifest(out / f"manifest_transfer_{args.source}.json", config, command="transfer",
                       population=str(pop_path), repeats=ctx.repeats)


def cmd_baseline(args, ctx: _Context) -> None:
    targets = {t: ctx.task(t) for t in _task_names(args.targets)}
    report = exp.run_baseline(targets, ctx.config, args.source, ctx.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    exp.write_report(report, out / f"baseline_{report.label}.json")
    exp.write_manifest(out / f"manifest_baseline_{report.label}.json", ctx.config, command="baseline",
                       repeats=ctx.repeats)


def cmd_relatedness(args, ctx: _Context) -> None:
    epochs = args.epochs if args.epochs is not None else ctx.config.epochs
    count = args.count or ctx.repeats
    snaps = {
        t: train_reference_nets(ctx.task(t), count, ctx.config.seed(), hidden=args.hidden, epochs=epochs,
                                jobs=ctx.config.jobs)
        for t in _task_names(args.tasks)
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    relatedness(snaps, seed=ctx.config.seed()).to_csv(args.out)


def cmd_report(args) -> None:
    reports = exp.load_reports(args.in_dir)
    out = Path(args.out or args.in_dir)
    if args.format == "csv":
        for p in exp.emit_tables(reports, out):
            print(p)
    else:
        out.mkdir(parents=True, exist_ok=True)
        print(exp.emit_json(reports, out / "report.json"))


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "calibrate": cmd_calibrate,
    "evolve": cmd_evolve,
    "transfer": cmd_transfer,
    "baseline": cmd_baseline,
    "relatedness": cmd_relatedness,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args)
        else:
            _COMMANDS[args.command](args, _Context(args))
    except (ValueError, FileNotFoundError, RuntimeError, OSError) as exc:
        print(f"bgtransfer {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
