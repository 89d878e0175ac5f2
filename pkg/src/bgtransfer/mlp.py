"""One-hidden-layer logistic network trained by per-sample SGD with momentum.

Biases are folded in as a constant-1 input to each layer, so ``w1`` has shape
``(hidden, input_dim + 1)`` and ``w2`` has shape ``(1, hidden + 1)``; the last
column of each holds the bias weights.  Both layers share the logistic slope.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

from .genome import Genome

INIT_RANGE = 0.5
DIVERGENCE_LOSS = 1e6


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_nodes: int
    learning_rate: float
    momentum: float
    logistic_slope: float
    epochs: int
    weight_init_seed: int

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_nodes < 1:
            raise ValueError("input_dim and hidden_nodes must be positive")
        if self.learning_rate <= 0 or self.logistic_slope <= 0:
            raise ValueError("learning_rate and logistic_slope must be positive")
        if self.momentum < 0:
            raise ValueError("momentum must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @classmethod
    def from_genome(cls, genome: Genome, input_dim: int, epochs: int, weight_init_seed: int) -> "NetConfig":
        return cls(
            input_dim=input_dim,
            hidden_nodes=genome.hidden,
            learning_rate=genome.rate,
            momentum=genome.momentum,
            logistic_slope=genome.slope,
            epochs=epochs,
            weight_init_seed=int(weight_init_seed),
        )


@dataclass
class Network:
    w1: np.ndarray
    w2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    config: NetConfig
    diverged: bool = False

    def copy(self) -> "Network":
        return Network(self.w1.copy(), self.w2.copy(), self.v1.copy(), self.v2.copy(), self.config, self.diverged)

    def flat_weights(self) -> np.ndarray:
        """Layer-major flattening: all of ``w1`` row by row, then ``w2``."""
        return np.concatenate([self.w1.ravel(), self.w2.ravel()])


def init_network(config: NetConfig) -> Network:
    rng = np.random.default_rng(config.weight_init_seed)
    h, d = config.hidden_nodes, config.input_dim
    w1 = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(h, d + 1))
    w2 = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(1, h + 1))
    return Network(w1, w2, np.zeros_like(w1), np.zeros_like(w2), config)


def logistic(x, slope: float = 1.0):
    """1 / (1 + exp(-slope * x)), evaluated without overflow for either sign."""
    z = slope * np.asarray(x, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def forward(net: Network, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (hidden activations, output) for a batch of rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.config.input_dim:
        raise ValueError(f"feature width {X.shape[1]} != input_dim {net.config.input_dim}")
    s = net.config.logistic_slope
    hidden = logistic(_augment(X) @ net.w1.T, s)
    out = logistic(_augment(hidden) @ net.w2.T, s)[:, 0]
    return hidden, out


def loss(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    """Summed squared error 0.5 * sum (y - o)^2."""
    _, out = forward(net, X)
    return float(0.5 * np.sum((np.asarray(y, dtype=float) - out) ** 2))


def gradients(net: Network, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`loss` w.r.t. (w1, w2)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    s = net.config.logistic_slope
    hidden, out = forward(net, X)
    d_out = (out - y) * s * out * (1.0 - out)
    g2 = d_out @ _augment(hidden)
    d_hidden = np.outer(d_out, net.w2[0, :-1]) * s * hidden * (1.0 - hidden)
    g1 = d_hidden.T @ _augment(X)
    return g1, g2[None, :]


def _sgd_reference(w1, w2, v1, v2, X, y, order, lr, mom, slope, losses):
    """Plain-numpy twin of the compiled kernel; same update, same order."""
    n_epochs, n = order.shape
    for e in range(n_epochs):
        total = 0.0
        for i in order[e]:
            x = np.append(X[i], 1.0)
            h = np.append(logistic(w1 @ x, slope), 1.0)
            o = float(logistic(w2 @ h, slope))
            err = o - y[i]
            total += 0.5 * err * err
            d_out = err * slope * o * (1.0 - o)
            d_hid = d_out * w2[:-1] * slope * h[:-1] * (1.0 - h[:-1])
            v2[:] = -lr * d_out * h + mom * v2
            w2 += v2
            v1[:] = -lr * np.outer(d_hid, x) + mom * v1
            w1 += v1
        losses[e] = total / n
        if not math.isfinite(total) or losses[e] > DIVERGENCE_LOSS:
            return e + 1
        if not (np.isfinite(w1).all() and np.isfinite(w2).all()):
            return e + 1
    return -1


def _sgd_kernel_py(w1, w2, v1, v2, X, y, order, lr, mom, slope, losses):
    n_epochs, n = order.shape
    H, D1 = w1.shape
    D = D1 - 1
    h = np.empty(H + 1)
    h[H] = 1.0
    dh = np.empty(H)
    for e in range(n_epochs):
        total = 0.0
        for k in range(n):
            i = order[e, k]
            for j in range(H):
                a = w1[j, D]
                for d in range(D):
                    a += w1[j, d] * X[i, d]
                z = slope * a
                if z >= 0.0:
                    h[j] = 1.0 / (1.0 + math.exp(-z))
                else:
                    ez = math.exp(z)
                    h[j] = ez / (1.0 + ez)
            a = 0.0
            for j in range(H + 1):
                a += w2[j] * h[j]
            z = slope * a
            if z >= 0.0:
                o = 1.0 / (1.0 + math.exp(-z))
            else:
                ez = math.exp(z)
                o = ez / (1.0 + ez)
            err = o - y[i]
            total += 0.5 * err * err
            d_out = err * slope * o * (1.0 - o)
            for j in range(H):
                dh[j] = d_out * w2[j] * slope * h[j] * (1.0 - h[j])
            for j in range(H + 1):
                v2[j] = -lr * d_out * h[j] + mom * v2[j]
                w2[j] += v2[j]
            for j in range(H):
                g = dh[j]
                for d in range(D):
                    v1[j, d] = -lr * g * X[i, d] + mom * v1[j, d]
                    w1[j, d] += v1[j, d]
                v1[j, D] = -lr * g + mom * v1[j, D]
                w1[j, D] += v1[j, D]
        losses[e] = total / n
        if not math.isfinite(total) or losses[e] > DIVERGENCE_LOSS:
            return e + 1
        if not (np.isfinite(w1).all() and np.isfinite(w2).all()):
            return e + 1
    return -1


_sgd_kernel = njit(cache=True, nogil=True)(_sgd_kernel_py) if njit else _sgd_kernel_py


def shuffle_orders(indices: np.ndarray, epochs: int, seed) -> np.ndarray:
    """One independent permutation of ``indices`` per epoch, as an (epochs, n) array."""
    rng = np.random.default_rng(seed)
    tiled = np.tile(np.asarray(indices, dtype=np.int64), (epochs, 1))
    return rng.permuted(tiled, axis=1) if epochs else tiled


def train(
    net: Network,
    features: np.ndarray,
    labels: np.ndarray,
    train_indices,
    shuffle_seed=None,
    reference: bool = False,
) -> tuple[Network, np.ndarray]:
    """Train a copy of ``net`` for ``net.config.epochs`` passes.

    Returns the trained network and the per-epoch mean squared-error trace.  On
    divergence (non-finite weights, or epoch loss above 1e6) training stops,
    the returned network has ``diverged=True`` and the remaining trace entries
    are NaN.  ``reference=True`` runs the slow numpy implementation.
    """
    idx = np.asarray(train_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("train_indices is empty")
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.shape[1] != net.config.input_dim:
        raise ValueError(f"feature width {X.shape[1]} != input_dim {net.config.input_dim}")
    y = np.ascontiguousarray(labels, dtype=np.float64)
    cfg = net.config
    if shuffle_seed is None:
        shuffle_seed = (cfg.weight_init_seed, 1)
    order = shuffle_orders(idx, cfg.epochs, shuffle_seed)
    out = net.copy()
    losses = np.full(cfg.epochs, np.nan)
    w2 = out.w2.reshape(-1)
    v2 = out.v2.reshape(-1)
    fn = _sgd_reference if reference else _sgd_kernel
    stopped = fn(out.w1, w2, out.v1, v2, X, y, order, cfg.learning_rate, cfg.momentum, cfg.logistic_slope, losses)
    out.diverged = bool(stopped > 0)
    return out, losses


def predict_proba(net: Network, X: np.ndarray) -> np.ndarray:
    return forward(net, X)[1]


def predict(net: Network, feature_row) -> int:
    row = np.asarray(feature_row, dtype=float)
    if row.ndim != 1:
        raise ValueError("predict expects a single feature row")
    return int(predict_batch(net, row[None, :])[0])


def predict_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Class 1 where the output unit is >= 0.5."""
    return (predict_proba(net, X) >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class ConfusionSummary:
    tp: float
    tn: float
    fp: float
    fn: float

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> float:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionSummary":
        return cls(float(d["tp"]), float(d["tn"]), float(d["fp"]), float(d["fn"]))

    @classmethod
    def mean(cls, summaries) -> "ConfusionSummary":
        summaries = list(summaries)
        if not summaries:
            raise ValueError("cannot average zero summaries")
        arr = np.array([[s.tp, s.tn, s.fp, s.fn] for s in summaries], dtype=float)
        return cls(*(float(v) for v in arr.mean(axis=0)))


def confusion(predicted: np.ndarray, actual: np.ndarray) -> ConfusionSummary:
    predicted = np.asarray(predicted).astype(bool)
    actual = np.asarray(actual).astype(bool)
    return ConfusionSummary(
        tp=float(np.sum(predicted & actual)),
        tn=float(np.sum(~predicted & ~actual)),
        fp=float(np.sum(predicted & ~actual)),
        fn=float(np.sum(~predicted & actual)),
    )


def evaluate(net: Network, features: np.ndarray, labels: np.ndarray, index_set) -> ConfusionSummary:
    idx = np.asarray(index_set, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("index_set is empty")
    return confusion(predict_batch(net, features[idx]), np.asarray(labels)[idx])


def _ratio(num: float, den: float):
    return num / den if den else None


def metrics(cs: ConfusionSummary) -> dict:
    """Misclassification percent plus precision/recall in two conventions.

    ``precision_neg``/``recall_neg`` are computed on the negative class
    (tn/(tn+fn), tn/(tn+fp)), the convention the report tables use;
    ``*_std`` are the usual positive-class values.  Undefined ratios (zero
    denominator) are ``None``.
    """
    return {
        "misclassification_percent": _ratio(100.0 * (cs.fp + cs.fn), cs.total),
        "precision_neg": _ratio(cs.tn, cs.tn + cs.fn),
        "recall_neg": _ratio(cs.tn, cs.tn + cs.fp),
        "precision_std": _ratio(cs.tp, cs.tp + cs.fp),
        "recall_std": _ratio(cs.tp, cs.tp + cs.fn),
    }


def misclassification(net: Network, features, labels, index_set) -> float:
    return metrics(evaluate(net, features, labels, index_set))["misclassification_percent"]


def write_weights_csv(net: Network, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "row", "col", "value"])
        for layer, mat in ((1, net.w1), (2, net.w2)):
            for (r, c), v in np.ndenumerate(mat):
                w.writerow([layer, r, c, repr(float(v))])


def read_weights_csv(path) -> tuple[np.ndarray, np.ndarray]:
    entries = {1: [], 2: []}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            entries[int(row["layer"])].append((int(row["row"]), int(row["col"]), float(row["value"])))
    mats = []
    for layer in (1, 2):
        cells = entries[layer]
        if not cells:
            raise ValueError(f"weights file has no layer {layer}")
        shape = (max(r for r, _, _ in cells) + 1, max(c for _, c, _ in cells) + 1)
        m = np.zeros(shape)
        for r, c, v in cells:
            m[r, c] = v
        mats.append(m)
    return mats[0], mats[1]


def network_from_weights(w1: np.ndarray, w2: np.ndarray, config: NetConfig) -> Network:
    if w1.shape != (config.hidden_nodes, config.input_dim + 1) or w2.shape != (1, config.hidden_nodes + 1):
        raise ValueError("weight shapes do not match config")
    return Network(w1.copy(), w2.copy(), np.zeros_like(w1), np.zeros_like(w2), config)
