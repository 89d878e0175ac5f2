"""Grid search over the four hyperparameters and interval extraction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product

from . import mlp
from .dataio import TaskDataset
from .evolve import _map, derive_int
from .genome import GENE_NAMES, CalibrationBounds, Genome

DEFAULT_QUANTILE = 0.1


@dataclass(frozen=True)
class ScoredConfig:
    genome: Genome
    score: float  # validation misclassification percent; 100 for divergent nets


def expand_grid(grid: dict) -> list[Genome]:
    missing = [n for n in GENE_NAMES if n not in grid]
    if missing:
        raise ValueError(f"grid is missing {missing}")
    axes = [list(grid[n]) for n in GENE_NAMES]
    if any(not a for a in axes):
        raise ValueError("grid has an empty axis")
    return [Genome.from_genes(g) for g in product(*axes)]


def grid_search(task: TaskDataset, grid: dict, seed: int, epochs: int = 100, jobs: int = 1) -> list[ScoredConfig]:
    """Train one net per grid point; return (genome, score) sorted by score.

    Ties keep grid order, so the result is deterministic.
    """
    genomes = expand_grid(grid)

    def score(k: int) -> float:
        cfg = mlp.NetConfig.from_genome(genomes[k], task.width, epochs, derive_int(seed, 8, k))
        net, _ = mlp.train(mlp.init_network(cfg), task.features, task.labels, task.train)
        if net.diverged:
            return 100.0
        return mlp.misclassification(net, task.features, task.labels, task.validation)

    scores = _map(score, range(len(genomes)), jobs)
    order = sorted(range(len(genomes)), key=lambda k: (scores[k], k))
    return [ScoredConfig(genomes[k], scores[k]) for k in order]


def derive_bounds(scored: list[ScoredConfig], quantile: float = DEFAULT_QUANTILE) -> CalibrationBounds:
    """Per-gene [min, max] over the best ceil(q * n) configurations."""
    if not scored:
        raise ValueError("no scored configurations")
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    ranked = sorted(scored, key=lambda s: s.score)
    best = ranked[: max(1, math.ceil(quantile * len(ranked) - 1e-9))]
    cols = list(zip(*(s.genome.genes for s in best)))
    return CalibrationBounds(
        hidden=(int(min(cols[0])), int(max(cols[0]))),
        rate=(min(cols[1]), max(cols[1])),
        momentum=(min(cols[2]), max(cols[2])),
        slope=(min(cols[3]), max(cols[3])),
    )


def read_grid(path) -> dict:
    with open(path) as fh:
        grid = json.load(fh)
    expand_grid(grid)
    return grid


def write_bounds(bounds_by_task: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump({t: b.to_dict() for t, b in bounds_by_task.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_bounds(path) -> dict[str, CalibrationBounds]:
    with open(path) as fh:
        raw = json.load(fh)
    return {t: CalibrationBounds.from_dict(d) for t, d in raw.items()}
