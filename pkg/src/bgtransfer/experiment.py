"""Transfer evaluation, the random-genome baseline, and table emission.

A transfer run takes the merged source population and, for every target
task, trains each member's genome from fresh weights on the SES-filtered
target training split, then averages confusion counts over members and
repeat runs.  The baseline does the same for genomes drawn uniformly inside
calibration bounds.  Both use the same per-position weight and SES seeds, so
a transfer run and a baseline run with one master seed form a matched pair.

Counts are reported for three scopes: the validation split, the test split,
and the full dataset (whose totals equal the instance counts).
"""

from __future__ import annotations

import csv
import json
import platform
import zlib
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import mlp
from .dataio import TaskDataset, apply_ses, random_ses_filter
from .evolve import EvolutionConfig, Population, _map, derive_int, derive_seed
from .genome import CalibrationBounds, Genome, random_genome

SCOPES = ("validation", "test", "full")
TABLE_METRICS = ("TP", "TN", "FP", "FN", "precision", "recall", "misclassification")

# stage tags for derived seeds (disjoint from the evolution tags)
_EVAL_SES, _EVAL_WEIGHTS, _BASELINE_GENOME = 20, 21, 22


def _task_key(name: str) -> int:
    return zlib.crc32(name.encode())


@dataclass(frozen=True)
class TargetResult:
    """Mean confusion counts of one population on one target task."""

    target: str
    validation: mlp.ConfusionSummary
    test: mlp.ConfusionSummary
    full: mlp.ConfusionSummary
    n_evaluations: int
    n_divergent: int

    def scope(self, name: str) -> mlp.ConfusionSummary:
        if name not in SCOPES:
            raise ValueError(f"unknown scope {name!r}")
        return getattr(self, name)

    def error(self, scope: str = "test") -> float:
        return mlp.metrics(self.scope(scope))["misclassification_percent"]

    def to_dict(self) -> dict:
        d = {s: self.scope(s).to_dict() for s in SCOPES}
        d.update(target=self.target, n_evaluations=self.n_evaluations, n_divergent=self.n_divergent)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TargetResult":
        return cls(
            d["target"],
            *(mlp.ConfusionSummary.from_dict(d[s]) for s in SCOPES),
            int(d["n_evaluations"]),
            int(d["n_divergent"]),
        )


@dataclass
class _Report:
    targets: tuple[str, ...]
    results: dict[str, TargetResult] = field(default_factory=dict)
    repeats: int = 1
    master_seed: int = 0

    @property
    def complete(self) -> bool:
        return bool(self.targets) and all(t in self.results for t in self.targets)

    def error(self, target: str, scope: str = "test") -> float:
        return self.results[target].error(scope)

    def _base_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "repeats": self.repeats,
            "master_seed": self.master_seed,
            "results": {t: self.results[t].to_dict() for t in self.targets if t in self.results},
        }


@dataclass
class TransferReport(_Report):
    source: str = ""

    @property
    def label(self) -> str:
        return self.source

    def to_dict(self) -> dict:
        return {"kind": "transfer", "source": self.source, **self._base_dict()}


@dataclass
class BaselineReport(_Report):
    bounds_from: str | None = None  # None: each target's own bounds

    @property
    def label(self) -> str:
        return self.bounds_from or "own"

    def to_dict(self) -> dict:
        return {"kind": "baseline", "bounds_from": self.bounds_from, **self._base_dict()}


def report_from_dict(d: dict):
    common = dict(
        targets=tuple(d["targets"]),
        results={t: TargetResult.from_dict(r) for t, r in d["results"].items()},
        repeats=int(d["repeats"]),
        master_seed=int(d["master_seed"]),
    )
    if d.get("kind") == "transfer":
        return TransferReport(source=d["source"], **common)
    if d.get("kind") == "baseline":
        return BaselineReport(bounds_from=d.get("bounds_from"), **common)
    raise ValueError(f"unknown report kind {d.get('kind')!r}")


def write_report(report, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path):
    with open(path) as fh:
        return report_from_dict(json.load(fh))


def evaluate_genomes(
    genomes: list[Genome],
    target: TaskDataset,
    epochs: int,
    master_seed: int,
    repeats: int = 4,
    jobs: int = 1,
) -> TargetResult:
    """Train every genome ``repeats`` times on ``target`` and average counts.

    Member ``i`` in repeat ``r`` gets weight and SES seeds derived from
    (target, r, i) only, so two genome lists of equal length see the same
    seeds.  Divergent nets are left out of the means and counted separately.
    """
    if not genomes:
        raise ValueError("no genomes to evaluate")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    tkey = _task_key(target.name)
    jobs_list = [(r, i) for r in range(repeats) for i in range(len(genomes))]

    def run(item):
        r, i = item
        ses = random_ses_filter(target, derive_seed(master_seed, _EVAL_SES, tkey, r, i))
        cfg = mlp.NetConfig.from_genome(
            genomes[i], target.width, epochs, derive_int(master_seed, _EVAL_WEIGHTS, tkey, r, i)
        )
        net, _ = mlp.train(mlp.init_network(cfg), target.features, target.labels, apply_ses(target, ses))
        if net.diverged:
            return None
        return tuple(mlp.evaluate(net, target.features, target.labels, target.indices(s)) for s in SCOPES)

    outcomes = _map(run, jobs_list, jobs)
    ok = [o for o in outcomes if o is not None]
    if not ok:
        raise RuntimeError(f"{target.name}: every network diverged")
    means = [mlp.ConfusionSummary.mean(o[k] for o in ok) for k in range(len(SCOPES))]
    return TargetResult(target.name, *means, n_evaluations=len(outcomes), n_divergent=len(outcomes) - len(ok))


def run_transfer(
    source: str,
    population: Population | None,
    targets: dict[str, TaskDataset],
    config: EvolutionConfig,
    repeats: int = 4,
) -> TransferReport:
    if population is None or len(population) == 0:
        raise ValueError(f"no optimised population for source {source!r}")
    genomes = [m.genome for m in population.members]
    report = TransferReport(tuple(targets), repeats=repeats, master_seed=config.seed(), source=source)
    for name, task in targets.items():
        report.results[name] = evaluate_genomes(genomes, task, config.epochs, config.seed(), repeats, config.jobs)
    return report


def baseline_genomes(bounds: CalibrationBounds, n: int, master_seed: int, key: int = 0) -> list[Genome]:
    return [random_genome(bounds, derive_seed(master_seed, _BASELINE_GENOME, key, i)) for i in range(n)]


def run_baseline(
    targets: dict[str, TaskDataset],
    config: EvolutionConfig,
    bounds_from: str | None = None,
    repeats: int = 4,
) -> BaselineReport:
    """Random genomes within calibration bounds, trained once per target.

    ``bounds_from`` names the task whose bounds all genomes are drawn from
    (use the transfer source for a matched comparison); ``None`` draws each
    target's genomes from that target's own bounds.
    """
    seed = config.seed()
    report = BaselineReport(tuple(targets), repeats=repeats, master_seed=seed, bounds_from=bounds_from)
    for name, task in targets.items():
        bounds_task = bounds_from or name
        genomes = baseline_genomes(config.bounds_for(bounds_task), config.population_size, seed,
                                   _task_key(bounds_task))
        report.results[name] = evaluate_genomes(genomes, task, config.epochs, seed, repeats, config.jobs)
    return report


def _fmt(v) -> str:
    return "NA" if v is None else repr(float(v))


def table_rows(result: TargetResult, scope: str) -> dict[str, float | None]:
    cs = result.scope(scope)
    m = mlp.metrics(cs)
    return {
        "TP": cs.tp,
        "TN": cs.tn,
        "FP": cs.fp,
        "FN": cs.fn,
        "precision": m["precision_neg"],
        "recall": m["recall_neg"],
        "misclassification": m["misclassification_percent"],
    }


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _check_complete(report) -> None:
    if not report.complete:
        missing = [t for t in report.targets if t not in report.results]
        raise ValueError(f"{type(report).__name__} {report.label!r} is incomplete (missing {missing or 'targets'})")
    for t in report.targets:
        for s in SCOPES:
            vals = list(report.results[t].scope(s).to_dict().values())
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"{report.label}/{t}/{s}: non-finite counts")


def emit_tables(reports, out_dir) -> list[Path]:
    """Write per-report CSV tables plus long-format plot and metric files.

    For a transfer report from ``source``: ``table_<source>.csv`` holds the
    validation and test blocks (7 rows each, one column per target) and
    ``table_<source>_full.csv`` the full-dataset block.  Baseline reports
    give ``table_baseline_<label>.csv`` with one error row per split.
    ``benchmark.csv`` has one (target, method, split, error) row per report,
    target and split; ``metrics_long.csv`` has every emitted number.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    for r in reports:
        _check_complete(r)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    long_rows, bench_rows = [], []
    for rep in sorted(reports, key=lambda r: (isinstance(r, BaselineReport), r.label)):
        method = f"transfer:{rep.source}" if isinstance(rep, TransferReport) else f"baseline:{rep.label}"
        for t in rep.targets:
            res = rep.results[t]
            for s in SCOPES:
                cs = res.scope(s)
                vals = {**{k.upper(): v for k, v in cs.to_dict().items()}, **mlp.metrics(cs)}
                long_rows += [[method, t, s, k, _fmt(v)] for k, v in vals.items()]
            bench_rows += [[t, method, s, _fmt(res.error(s))] for s in ("validation", "test")]
        if isinstance(rep, TransferReport):
            blocks = {f"table_{rep.source}.csv": ("validation", "test"), f"table_{rep.source}_full.csv": ("full",)}
            for fname, scopes in blocks.items():
                rows = []
                for s in scopes:
                    per_target = [table_rows(rep.results[t], s) for t in rep.targets]
                    rows += [[s, k, *(_fmt(p[k]) for p in per_target)] for k in TABLE_METRICS]
                paths.append(_write_csv(out / fname, ["block", "metric", *rep.targets], rows))
        else:
            rows = [[s, "misclassification", *(_fmt(rep.error(t, s)) for t in rep.targets)]
                    for s in ("validation", "test")]
            paths.append(_write_csv(out / f"table_baseline_{rep.label}.csv", ["block", "metric", *rep.targets], rows))
    paths.append(_write_csv(out / "benchmark.csv", ["target", "method", "split", "error"], bench_rows))
    paths.append(_write_csv(out / "metrics_long.csv", ["method", "target", "scope", "metric", "value"], long_rows))
    return paths


def emit_json(reports, path) -> Path:
    reports = list(reports)
    for r in reports:
        _check_complete(r)
    payload = {"reports": [r.to_dict() for r in sorted(reports, key=lambda r: (r.to_dict()["kind"], r.label))]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def load_reports(in_dir) -> list:
    """All ``transfer_*.json`` and ``baseline_*.json`` reports in ``in_dir``."""
    in_dir = Path(in_dir)
    files = sorted(in_dir.glob("transfer_*.json")) + sorted(in_dir.glob("baseline_*.json"))
    if not files:
        raise FileNotFoundError(f"no transfer_*.json or baseline_*.json reports in {in_dir}")
    return [read_report(p) for p in files]


def _version(pkg: str) -> str | None:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return None


def write_manifest(path, config: EvolutionConfig | None = None, **extra) -> None:
    """Run manifest: config, seeds and library versions, no timestamps."""
    manifest = {
        "config": config.to_dict() if config is not None else None,
        "versions": {
            "python": platform.python_version(),
            **{p: _version(p) for p in ("artifact", "numpy", "numba")},
        },
        **extra,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def run_pipeline(
    sources: list[str],
    tasks: dict[str, TaskDataset],
    config: EvolutionConfig,
    out_dir,
    repeats: int = 4,
) -> list:
    """Evolve each source, transfer to every task, run the matched baseline.

    Writes ``<source>/merged.jsonl`` checkpoints, ``transfer_<source>.json``
    and ``baseline_<source>.json`` reports, the CSV tables and a manifest
    into ``out_dir``; returns the reports.
    """
    from .evolve import evolve_source, merge_final, write_population

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for source in sources:
        evo = evolve_source(tasks[source], config)
        merged = merge_final(evo.pop_a, evo.pop_b, config, config.bounds_for(source))
        (out / source).mkdir(exist_ok=True)
        write_population(merged, out / source / "merged.jsonl")
        transfer = run_transfer(source, merged, tasks, config, repeats)
        baseline = run_baseline(tasks, config, bounds_from=source, repeats=repeats)
        write_report(transfer, out / f"transfer_{source}.json")
        write_report(baseline, out / f"baseline_{source}.json")
        reports += [transfer, baseline]
    emit_tables(reports, out)
    write_manifest(out / "manifest.json", config, sources=list(sources), targets=list(tasks), repeats=repeats)
    return reports
