"""Dual-population twin evolution with selective breeding.

One generation, per population: every member is trained from fresh random
weights on an SES-filtered training split, assessed, and the top and middle
performers are bred (top x top, top x mid, mid x mid) into N offspring, each
parent pair yielding one MZ and one DZ twin pair.  The offspring of each
population are split so that siblings land in different halves, and halves
from the two populations are combined crosswise, which keeps every pair
spread across both populations.

All randomness is derived from the master seed plus a structural key
(stage, generation, individual id, ...), never from a shared stream, so the
result does not depend on how member training is scheduled.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path

import numpy as np

from . import mlp
from .dataio import SesFilter, TaskDataset, apply_ses, random_ses_filter
from .genome import (
    DZ,
    MUTATION_RATE,
    MZ,
    DEFAULT_BOUNDS,
    CalibrationBounds,
    Genome,
    crossover,
    make_twins,
    mutate,
    random_genome,
)

WORST_FITNESS = 100.0

# stage tags mixed into every derived seed
_INIT, _SES, _WEIGHTS, _BREED, _MERGE = range(5)


def derive_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def derive_int(master_seed: int, *key: int) -> int:
    return int(derive_seed(master_seed, *key).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 1200
    generations: int = 20
    epochs: int = 1000
    top_fraction: float = 1 / 6
    mid_fraction: float = 1 / 6
    bounds: CalibrationBounds | None = None
    master_seed: int | None = None
    mutation_rate: float = MUTATION_RATE
    fitness_split: str = "test"
    jobs: int = 1

    def __post_init__(self):
        n = self.population_size
        if n < 4 or n % 4:
            raise ValueError(f"population_size must be a positive multiple of 4, got {n}")
        if self.generations < 0 or self.epochs < 0:
            raise ValueError("generations and epochs must be non-negative")
        for name in ("top_fraction", "mid_fraction"):
            f = getattr(self, name)
            if not 0 < f <= 0.5:
                raise ValueError(f"{name} must be in (0, 0.5], got {f}")
        if self.fitness_split not in ("test", "validation"):
            raise ValueError("fitness_split must be 'test' or 'validation'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @classmethod
    def desk(cls, master_seed: int, **overrides) -> "EvolutionConfig":
        """Small preset: N=40, G=5, 100 epochs."""
        base = dict(population_size=40, generations=5, epochs=100, master_seed=master_seed)
        base.update(overrides)
        return cls(**base)

    def bounds_for(self, task_name: str) -> CalibrationBounds:
        if self.bounds is not None:
            return self.bounds
        try:
            return DEFAULT_BOUNDS[task_name]
        except KeyError:
            raise ValueError(f"no calibration bounds for task {task_name!r}") from None

    def seed(self) -> int:
        if self.master_seed is None:
            raise ValueError("master_seed is required")
        return int(self.master_seed)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "bounds"}
        d["bounds"] = self.bounds.to_dict() if self.bounds else None
        return d


@dataclass
class Individual:
    id: int
    genome: Genome
    pair_id: int
    zygosity: str | None = None  # None: not part of a twin pair
    sibling_id: int | None = None
    ses: SesFilter | None = None
    weight_seed: int | None = None
    fitness: float | None = None
    divergent: bool = False
    network: mlp.Network | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "genome": self.genome.to_dict(),
            "pair_id": self.pair_id,
            "zygosity": self.zygosity,
            "sibling_id": self.sibling_id,
            "ses_fraction": None if self.ses is None else self.ses.fraction,
            "ses_seed": None if self.ses is None else self.ses.seed,
            "weight_seed": self.weight_seed,
            "fitness": self.fitness,
            "divergent": self.divergent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Individual":
        return cls(
            id=int(d["id"]),
            genome=Genome.from_dict(d["genome"]),
            pair_id=int(d["pair_id"]),
            zygosity=d.get("zygosity"),
            sibling_id=d.get("sibling_id"),
            weight_seed=d.get("weight_seed"),
            fitness=d.get("fitness"),
            divergent=bool(d.get("divergent", False)),
        )


@dataclass
class Population:
    members: list[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def pair_ids(self) -> set[int]:
        return {m.pair_id for m in self.members}

    def fitness(self) -> np.ndarray:
        if any(m.fitness is None for m in self.members):
            raise ValueError("population has unassessed members")
        return np.array([m.fitness for m in self.members], dtype=float)


def check_population(pop: Population, size: int | None = None) -> None:
    """Raise on a wrong size, duplicate ids, or co-resident twins."""
    if size is not None and len(pop) != size:
        raise ValueError(f"population size {len(pop)} != {size}")
    seen: set[int] = set()
    for m in pop.members:
        if m.pair_id in seen:
            raise ValueError(f"both members of pair {m.pair_id} share a population")
        seen.add(m.pair_id)
    if len({m.id for m in pop.members}) != len(pop):
        raise ValueError("duplicate individual ids")


class IdSource:
    """Monotone id counters for individuals and twin pairs."""

    def __init__(self, start: int = 0, pair_start: int | None = None):
        self._ids = count(start)
        self._pairs = count(start if pair_start is None else pair_start)

    def individual(self) -> int:
        return next(self._ids)

    def pair(self) -> int:
        return next(self._pairs)


def init_populations(config: EvolutionConfig, bounds: CalibrationBounds, ids: IdSource | None = None):
    ids = ids or IdSource()
    seed = config.seed()
    pops = []
    for p in range(2):
        members = []
        for i in range(config.population_size):
            genome = random_genome(bounds, derive_seed(seed, _INIT, p, i))
            members.append(Individual(ids.individual(), genome, ids.pair()))
        pops.append(Population(members, 0))
    return pops[0], pops[1]


def assign_ses(populations, task: TaskDataset, master_seed: int, generation: int) -> None:
    """Fresh SES filter per twin pair, shared by both siblings wherever they live."""
    cache: dict[int, SesFilter] = {}
    for pop in populations:
        for m in pop.members:
            if m.pair_id not in cache:
                cache[m.pair_id] = random_ses_filter(task, derive_seed(master_seed, _SES, generation, m.pair_id))
            m.ses = cache[m.pair_id]


def train_individual(ind: Individual, task: TaskDataset, epochs: int) -> mlp.Network:
    cfg = mlp.NetConfig.from_genome(ind.genome, task.width, epochs, ind.weight_seed)
    net, _ = mlp.train(mlp.init_network(cfg), task.features, task.labels, apply_ses(task, ind.ses))
    return net


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def train_population(pop: Population, task: TaskDataset, epochs: int, master_seed: int, generation: int, jobs: int = 1):
    """Assign per-individual weight seeds, then train every member."""
    for m in pop.members:
        m.weight_seed = derive_int(master_seed, _WEIGHTS, generation, m.id)
        m.fitness = None
    nets = _map(lambda m: train_individual(m, task, epochs), pop.members, jobs)
    for m, net in zip(pop.members, nets):
        m.network = net
        m.divergent = net.diverged


def assess(pop: Population, task: TaskDataset, split: str = "test") -> np.ndarray:
    """Misclassification percent on ``split``; divergent members score 100."""
    idx = task.indices(split)
    out = np.empty(len(pop))
    for k, m in enumerate(pop.members):
        if m.network is None:
            raise ValueError(f"individual {m.id} has not been trained")
        if m.divergent:
            m.fitness = WORST_FITNESS
        else:
            m.fitness = mlp.misclassification(m.network, task.features, task.labels, idx)
        out[k] = m.fitness
    return out


def _window(n: int, fraction: float) -> int:
    return max(1, math.ceil(n * fraction - 1e-9))


def select_for_mating(members, fitness, top_fraction: float = 1 / 6, mid_fraction: float = 1 / 6):
    """Top performers and a window of middle performers centred on the median.

    Members are ranked by ascending fitness, ties broken by lower id.
    """
    members = list(members)
    fitness = np.asarray(fitness, dtype=float)
    if len(members) != len(fitness):
        raise ValueError("members and fitness differ in length")
    n = len(members)
    order = sorted(range(n), key=lambda k: (fitness[k], members[k].id))
    n_top = _window(n, top_fraction)
    n_mid = _window(n, mid_fraction)
    start = (n - n_mid) // 2
    if start < n_top:
        raise ValueError(f"top ({n_top}) and middle ({n_mid}) windows overlap for n={n}")
    top = [members[k] for k in order[:n_top]]
    mid = [members[k] for k in order[start : start + n_mid]]
    return top, mid


class _ParentSampler:
    """Draw without replacement; reshuffle the pool once it runs dry."""

    def __init__(self, pool, rng):
        self.pool = list(pool)
        self.rng = rng
        self.queue: list[int] = []

    def draw(self, avoid=None):
        if not self.queue:
            self.queue = [int(i) for i in self.rng.permutation(len(self.pool))][::-1]
        k = self.queue.pop()
        if avoid is not None and self.pool[k] is avoid and len(self.pool) > 1:
            alt = self.draw()
            self.queue.append(k)
            return alt
        return self.pool[k]


def group_counts(n_pairs: int) -> tuple[int, int, int]:
    """Pairs per group (top x top, top x mid, mid x mid); remainder goes first."""
    base, rem = divmod(n_pairs, 3)
    return tuple(base + (g < rem) for g in range(3))


def parent_pairs(top, mid, n_pairs: int, rng) -> list[tuple]:
    if not top or not mid:
        raise ValueError("breeding pools must be non-empty")
    pairs = []
    for group, k in zip(("tt", "tm", "mm"), group_counts(n_pairs)):
        if group == "tt":
            s = _ParentSampler(top, rng)
            pairs += [(a, s.draw(avoid=a)) for a in (s.draw() for _ in range(k))]
        elif group == "tm":
            st, sm = _ParentSampler(top, rng), _ParentSampler(mid, rng)
            pairs += [(st.draw(), sm.draw()) for _ in range(k)]
        else:
            s = _ParentSampler(mid, rng)
            pairs += [(a, s.draw(avoid=a)) for a in (s.draw() for _ in range(k))]
    return pairs


def breed(top, mid, bounds: CalibrationBounds, n: int, seed, ids: IdSource | None = None,
          mutation_rate: float = MUTATION_RATE) -> list[Individual]:
    """N offspring from N/4 parent pairs, each giving one MZ and one DZ pair."""
    if n % 4:
        raise ValueError("offspring count must be divisible by 4")
    ids = ids or IdSource()
    rng = np.random.default_rng(seed)
    offspring = []
    for pa, pb in parent_pairs(top, mid, n // 4, rng):
        for zyg in (MZ, DZ):
            pid = ids.pair()
            twins = make_twins(pa.genome, pb.genome, zyg, bounds, rng, pair_id=pid, mutation_rate=mutation_rate)
            a = Individual(ids.individual(), twins.genome_a, pid, zyg)
            b = Individual(ids.individual(), twins.genome_b, pid, zyg)
            a.sibling_id, b.sibling_id = b.id, a.id
            offspring += [a, b]
    return offspring


def split(offspring) -> tuple[list[Individual], list[Individual]]:
    """Sibling 1 of every pair goes to the first half, sibling 2 to the second."""
    by_pair: dict[int, list[Individual]] = {}
    for ind in offspring:
        by_pair.setdefault(ind.pair_id, []).append(ind)
    half_a, half_b = [], []
    for pid, sibs in by_pair.items():
        if len(sibs) != 2:
            raise ValueError(f"pair {pid} has {len(sibs)} members; expected 2")
        half_a.append(sibs[0])
        half_b.append(sibs[1])
    return half_a, half_b


def combine(a1, a2, b1, b2, generation: int = 0) -> tuple[Population, Population]:
    sizes = {len(a1), len(a2), len(b1), len(b2)}
    if len(sizes) != 1:
        raise ValueError(f"half-population sizes differ: {sorted(sizes)}")
    pa = Population(list(a1) + list(b1), generation)
    pb = Population(list(a2) + list(b2), generation)
    check_population(pa)
    check_population(pb)
    return pa, pb


@dataclass
class GenerationStats:
    generation: int
    population: int
    mean_fitness: float
    best_fitness: float
    n_divergent: int
    n_mz: int
    n_dz: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvolutionResult:
    pop_a: Population
    pop_b: Population
    stats: list[GenerationStats]
    ids: IdSource = field(repr=False)


def _stats(gen: int, p: int, pop: Population, fit: np.ndarray) -> GenerationStats:
    return GenerationStats(
        generation=gen,
        population=p,
        mean_fitness=float(fit.mean()),
        best_fitness=float(fit.min()),
        n_divergent=sum(m.divergent for m in pop.members),
        n_mz=sum(m.zygosity == MZ for m in pop.members),
        n_dz=sum(m.zygosity == DZ for m in pop.members),
    )


def evolve_source(task: TaskDataset, config: EvolutionConfig, on_generation=None) -> EvolutionResult:
    """Run ``config.generations`` generations on ``task``.

    After the last breeding step the two populations are trained and assessed
    once more, so the returned members carry fitness and ``stats`` has one
    row per population for generations 0..G.  With G = 0 the initial,
    untrained populations are returned unchanged.

    ``on_generation(gen, stats, pops)`` is called after each breeding step
    with the two stats rows of generation ``gen`` and the freshly combined
    offspring populations.
    """
    seed = config.seed()
    bounds = config.bounds_for(task.name)
    ids = IdSource()
    pops = list(init_populations(config, bounds, ids))
    stats: list[GenerationStats] = []
    if config.generations == 0:
        return EvolutionResult(pops[0], pops[1], stats, ids)

    def train_and_assess(gen):
        assign_ses(pops, task, seed, gen)
        fits = []
        for p, pop in enumerate(pops):
            train_population(pop, task, config.epochs, seed, gen, config.jobs)
            fit = assess(pop, task, config.fitness_split)
            stats.append(_stats(gen, p, pop, fit))
            fits.append(fit)
        return fits

    for gen in range(config.generations):
        fits = train_and_assess(gen)
        halves = []
        for p, pop in enumerate(pops):
            top, mid = select_for_mating(pop.members, fits[p], config.top_fraction, config.mid_fraction)
            kids = breed(top, mid, bounds, config.population_size, derive_seed(seed, _BREED, gen, p), ids,
                         config.mutation_rate)
            halves.append(split(kids))
            for m in pop.members:
                m.network = None
        (a1, a2), (b1, b2) = halves
        pops = list(combine(a1, a2, b1, b2, generation=gen + 1))
        if on_generation is not None:
            on_generation(gen, stats[-2:], pops)
    train_and_assess(config.generations)
    return EvolutionResult(pops[0], pops[1], stats, ids)


def merge_final(pop_a: Population, pop_b: Population, config: EvolutionConfig,
                bounds: CalibrationBounds | None = None, ids: IdSource | None = None) -> Population:
    """Breed two assessed populations into one of size N without twins.

    Selection runs over the pooled 2N members; N/2 parent pairs (same
    three-group split as :func:`breed`) each give two independent children.
    """
    n = config.population_size
    if len(pop_a) != n or len(pop_b) != n:
        raise ValueError(f"merge expects two populations of size {n}")
    bounds = bounds or config.bounds
    if bounds is None:
        raise ValueError("merge_final needs calibration bounds")
    if ids is None:
        everyone = pop_a.members + pop_b.members
        ids = IdSource(1 + max(m.id for m in everyone), 1 + max(m.pair_id for m in everyone))
    pool = pop_a.members + pop_b.members
    fitness = np.array([m.fitness if m.fitness is not None else np.nan for m in pool])
    if np.isnan(fitness).any():
        raise ValueError("merge_final needs assessed populations")
    top, mid = select_for_mating(pool, fitness, config.top_fraction, config.mid_fraction)
    rng = np.random.default_rng(derive_seed(config.seed(), _MERGE))
    members = []
    for pa, pb in parent_pairs(top, mid, n // 2, rng):
        for _ in range(2):
            g = mutate(crossover(pa.genome, pb.genome, rng), bounds, rng, config.mutation_rate)
            members.append(Individual(ids.individual(), g, ids.pair()))
    return Population(members, max(pop_a.generation, pop_b.generation) + 1)


def write_population(pop: Population, path) -> None:
    with open(path, "w") as fh:
        for m in pop.members:
            fh.write(json.dumps(m.to_dict(), sort_keys=True) + "\n")


def read_population(path) -> Population:
    members = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    members.append(Individual.from_dict(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad individual record ({exc})") from None
    if not members:
        raise ValueError(f"{path}: empty population file")
    return Population(members)
