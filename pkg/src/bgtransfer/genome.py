"""Hyperparameter genomes, calibration bounds and twin construction.

A genome carries only the four evolvable hyperparameters of a network, in the
fixed order (hidden nodes, learning rate, momentum, logistic slope).  Weights
are never inherited.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

GENE_NAMES = ("hidden", "rate", "momentum", "slope")
MUTATION_RATE = 0.001

MZ = "MZ"
DZ = "DZ"


def as_rng(seed) -> np.random.Generator:
    """Accept an int, SeedSequence or Generator; Generators are used as-is."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class CalibrationBounds:
    hidden: tuple[int, int]
    rate: tuple[float, float]
    momentum: tuple[float, float]
    slope: tuple[float, float]

    def __post_init__(self):
        for name in GENE_NAMES:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.hidden[0] < 1:
            raise ValueError("hidden: lower bound must be >= 1")
        if self.rate[0] <= 0 or self.slope[0] <= 0:
            raise ValueError("rate and slope bounds must be positive")
        if self.momentum[0] < 0:
            raise ValueError("momentum bounds must be non-negative")

    def interval(self, index: int) -> tuple:
        return getattr(self, GENE_NAMES[index])

    def contains(self, genome: "Genome") -> bool:
        for name, value in zip(GENE_NAMES, genome.genes):
            lo, hi = getattr(self, name)
            if not lo <= value <= hi:
                return False
        return isinstance(genome.hidden, int)

    def contains_bounds(self, other: "CalibrationBounds") -> bool:
        """True when every interval of ``other`` lies inside this one."""
        return all(
            getattr(self, n)[0] <= getattr(other, n)[0]
            and getattr(other, n)[1] <= getattr(self, n)[1]
            for n in GENE_NAMES
        )

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in GENE_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationBounds":
        try:
            return cls(
                hidden=(int(d["hidden"][0]), int(d["hidden"][1])),
                rate=(float(d["rate"][0]), float(d["rate"][1])),
                momentum=(float(d["momentum"][0]), float(d["momentum"][1])),
                slope=(float(d["slope"][0]), float(d["slope"][1])),
            )
        except KeyError as exc:
            raise ValueError(f"bounds missing key {exc}") from None


# Per-task calibration intervals used to seed random genomes.
DEFAULT_BOUNDS: dict[str, CalibrationBounds] = {
    "australian": CalibrationBounds(hidden=(15, 50), rate=(0.01, 0.2), momentum=(0.01, 5.1), slope=(1.0, 4.0)),
    "german": CalibrationBounds(hidden=(5, 30), rate=(0.01, 0.4), momentum=(0.1, 1.2), slope=(0.8, 2.1)),
    "banknote": CalibrationBounds(hidden=(5, 15), rate=(0.01, 0.15), momentum=(0.01, 0.01), slope=(0.01, 1.2)),
}


@dataclass(frozen=True)
class Genome:
    hidden: int
    rate: float
    momentum: float
    slope: float

    @property
    def genes(self) -> tuple:
        return (self.hidden, self.rate, self.momentum, self.slope)

    @classmethod
    def from_genes(cls, genes: Iterable) -> "Genome":
        h, r, m, s = genes
        return cls(int(h), float(r), float(m), float(s))

    def to_dict(self) -> dict:
        return dict(zip(GENE_NAMES, self.genes))

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        return cls.from_genes(d[n] for n in GENE_NAMES)


@dataclass(frozen=True)
class TwinPair:
    pair_id: int
    zygosity: str
    genome_a: Genome
    genome_b: Genome
    shared_mask: tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __post_init__(self):
        check_twin_pair(self)

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "zygosity": self.zygosity,
            "shared_mask": [int(b) for b in self.shared_mask],
            "genome_a": self.genome_a.to_dict(),
            "genome_b": self.genome_b.to_dict(),
        }


def check_twin_pair(pair: TwinPair) -> None:
    if pair.zygosity == MZ:
        if pair.genome_a != pair.genome_b:
            raise ValueError(f"MZ pair {pair.pair_id} has differing genomes")
    elif pair.zygosity == DZ:
        if sum(pair.shared_mask) != 2:
            raise ValueError(f"DZ pair {pair.pair_id} must share exactly 2 genes")
        for shared, a, b in zip(pair.shared_mask, pair.genome_a.genes, pair.genome_b.genes):
            if shared and a != b:
                raise ValueError(f"DZ pair {pair.pair_id} differs on a shared gene")
    else:
        raise ValueError(f"unknown zygosity {pair.zygosity!r}")


def _draw_gene(index: int, bounds: CalibrationBounds, rng: np.random.Generator):
    lo, hi = bounds.interval(index)
    if index == 0:
        return int(rng.integers(lo, hi + 1))
    return float(rng.uniform(lo, hi))


def random_genome(bounds: CalibrationBounds, seed=None) -> Genome:
    rng = as_rng(seed)
    return Genome.from_genes(_draw_gene(i, bounds, rng) for i in range(4))


def crossover(a: Genome, b: Genome, seed=None, point: int | None = None) -> Genome:
    """Single-point crossover; the cut point is uniform over {1, 2, 3}."""
    if point is None:
        point = int(as_rng(seed).integers(1, 4))
    if not 1 <= point <= 3:
        raise ValueError("crossover point must be in 1..3")
    return Genome.from_genes(a.genes[:point] + b.genes[point:])


def mutate(g: Genome, bounds: CalibrationBounds, seed=None, rate: float = MUTATION_RATE) -> Genome:
    """Redraw each gene uniformly within its interval with probability ``rate``."""
    rng = as_rng(seed)
    hits = rng.random(4) < rate
    if not hits.any():
        return g
    genes = list(g.genes)
    for i in np.flatnonzero(hits):
        genes[i] = _draw_gene(int(i), bounds, rng)
    return Genome.from_genes(genes)


def _child(a: Genome, b: Genome, bounds: CalibrationBounds, rng, rate: float) -> Genome:
    return mutate(crossover(a, b, rng), bounds, rng, rate)


def make_twins(
    parent_a: Genome,
    parent_b: Genome,
    zygosity: str,
    bounds: CalibrationBounds,
    seed=None,
    pair_id: int = 0,
    mutation_rate: float = MUTATION_RATE,
) -> TwinPair:
    """Build one MZ or DZ pair from two parents.

    MZ siblings carry one crossover+mutate child twice.  A DZ second sibling
    copies a uniformly chosen 2-of-4 gene subset from the first and takes the
    other two genes from an independent crossover+mutate draw.
    """
    rng = as_rng(seed)
    first = _child(parent_a, parent_b, bounds, rng, mutation_rate)
    if zygosity == MZ:
        return TwinPair(pair_id, MZ, first, first)
    if zygosity != DZ:
        raise ValueError(f"unknown zygosity {zygosity!r}")
    other = _child(parent_a, parent_b, bounds, rng, mutation_rate)
    shared = rng.choice(4, size=2, replace=False)
    mask = tuple(bool(i in shared) for i in range(4))
    genes = [f if m else o for f, o, m in zip(first.genes, other.genes, mask)]
    return TwinPair(pair_id, DZ, first, Genome.from_genes(genes), mask)
