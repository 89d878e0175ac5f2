"""Task relatedness from the weights of equally shaped reference networks.

For two tasks the distance is the mean, over cross-task pairs of reference
snapshots, of ||a - b||_2 / L where L is the flattened weight-vector length.
Hidden units are compared in raw order; no permutation alignment is done.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import mlp
from .dataio import TaskDataset
from .evolve import _map, derive_int

REFERENCE_HIDDEN = 100
MAX_RETRIES = 5

# (learning rate, momentum, logistic slope) per task: rate and slope at the
# centre of the calibration interval, momentum at its (stable) lower end.
REFERENCE_PARAMS = {
    "australian": (0.105, 0.01, 2.5),
    "german": (0.205, 0.1, 1.45),
    "banknote": (0.08, 0.01, 0.605),
}


def _task_key(name: str) -> int:
    return zlib.crc32(name.encode())


def train_reference_nets(
    task: TaskDataset,
    count: int,
    seed: int,
    params: tuple[float, float, float] | None = None,
    hidden: int = REFERENCE_HIDDEN,
    epochs: int = 100,
    jobs: int = 1,
) -> list[np.ndarray]:
    """Train ``count`` fixed-architecture nets and return flat weight vectors.

    A divergent net is retrained from a new seed, at most five times.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rate, momentum, slope = params or REFERENCE_PARAMS[task.name]

    def one(r: int) -> np.ndarray:
        for attempt in range(MAX_RETRIES + 1):
            ws = derive_int(seed, 7, _task_key(task.name), r, attempt)
            cfg = mlp.NetConfig(task.width, hidden, rate, momentum, slope, epochs, ws)
            net, _ = mlp.train(mlp.init_network(cfg), task.features, task.labels, task.train)
            if not net.diverged:
                return net.flat_weights()
        raise RuntimeError(f"{task.name}: reference net {r} diverged {MAX_RETRIES + 1} times")

    return _map(one, range(count), jobs)


def pair_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"snapshot length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / a.size)


def mean_pair_distance(first, second, rng=None, max_pairs: int | None = None, skip_same: bool = False) -> float:
    """Mean normalised distance over all (or ``max_pairs`` sampled) cross pairs."""
    pairs = [(i, j) for i, j in product(range(len(first)), range(len(second))) if not (skip_same and i == j)]
    if not pairs:
        raise ValueError("no snapshot pairs to compare")
    if max_pairs is not None and max_pairs < len(pairs):
        rng = np.random.default_rng(rng)
        pick = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[k] for k in sorted(pick)]
    return float(np.mean([pair_distance(first[i], second[j]) for i, j in pairs]))


@dataclass(frozen=True, eq=False)
class RelatednessMatrix:
    tasks: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, key):
        i, j = (self.tasks.index(k) if isinstance(k, str) else k for k in key)
        return float(self.values[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", *self.tasks])
            for name, row in zip(self.tasks, self.values):
                w.writerow([name, *(f"{v:.6g}" for v in row)])

    @classmethod
    def from_csv(cls, path) -> "RelatednessMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        tasks = tuple(rows[0][1:])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(tasks, values)


def relatedness(snapshots_by_task: dict, seed=None, max_pairs: int | None = None) -> RelatednessMatrix:
    """Symmetric task-distance matrix with a zero diagonal."""
    tasks = tuple(snapshots_by_task)
    lengths = {s.size for snaps in snapshots_by_task.values() for s in snaps}
    if len(lengths) > 1:
        raise ValueError(f"snapshots have differing lengths {sorted(lengths)}")
    if any(len(s) == 0 for s in snapshots_by_task.values()):
        raise ValueError("every task needs at least one snapshot")
    rng = np.random.default_rng(seed)
    values = np.zeros((len(tasks), len(tasks)))
    for i in range(len(tasks)):
        for j in range(i + 1, len(tasks)):
            d = mean_pair_distance(snapshots_by_task[tasks[i]], snapshots_by_task[tasks[j]], rng, max_pairs)
            values[i, j] = values[j, i] = d
    return RelatednessMatrix(tasks, values)
