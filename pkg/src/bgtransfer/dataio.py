"""Loading, encoding, padding and splitting of the three UCI tasks.

Every task is mapped to the same feature width (``D_COMMON`` = 24, the widest
task) by min-max normalising its native columns and zero-padding on the right.
Splits are stratified 60/20/20 from a seed, and SES filters remove a random
fraction of a training split.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

D_COMMON = 24
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
SES_MAX = 0.4
MISSING_TOKENS = frozenset({"?", "", "NA", "nan"})
DATA_DIR_ENV = "BGT_DATA_DIR"


class DatasetError(ValueError):
    """Raised for unreadable, malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class TaskSpec:
    name: str
    n_columns: int
    delimiter: str | None  # None means any whitespace
    n_instances: int
    categorical: tuple[int, ...]
    positive_label: float
    filenames: tuple[str, ...]

    @property
    def d_native(self) -> int:
        return self.n_columns - 1


# positive_label picks the raw class counted as "positive"; chosen so class
# totals line up with the published confusion tables (383 / 300 / 762).
TASKS: dict[str, TaskSpec] = {
    "australian": TaskSpec(
        "australian", 15, None, 690, (0, 3, 4, 5, 7, 8, 10, 11), 0.0, ("australian.dat",)
    ),
    "german": TaskSpec(
        "german", 25, None, 1000, (), 2.0, ("german.data-numeric", "german.data-numeric.txt")
    ),
    "banknote": TaskSpec(
        "banknote", 5, ",", 1372, (), 0.0, ("data_banknote_authentication.txt", "banknote.txt")
    ),
}


def task_spec(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise DatasetError(f"unknown task {name!r}; expected one of {sorted(TASKS)}") from None


@dataclass(frozen=True)
class RawDataset:
    name: str
    rows: tuple[tuple[str, ...], ...]
    class_column: int

    def __len__(self) -> int:
        return len(self.rows)


def load_dataset(name: str, path) -> RawDataset:
    """Read a UCI flat file for ``name``; the class is the last column."""
    spec = task_spec(name)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{name}: no such file {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(spec.delimiter) if spec.delimiter else line.split()
            parts = tuple(p.strip() for p in parts)
            if len(parts) != spec.n_columns:
                raise DatasetError(
                    f"{path}: row {lineno} has {len(parts)} attributes, expected {spec.n_columns}"
                )
            rows.append(parts)
    if not rows:
        raise DatasetError(f"{path}: file contains no rows")
    if len(rows) != spec.n_instances:
        log.warning("%s: %d rows, canonical file has %d", name, len(rows), spec.n_instances)
    return RawDataset(name, tuple(rows), spec.n_columns - 1)


def find_task_file(name: str, data_dir=None) -> Path:
    """Locate the canonical file for ``name`` in ``data_dir`` (or $BGT_DATA_DIR)."""
    spec = task_spec(name)
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if data_dir is None:
        raise FileNotFoundError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    for fname in spec.filenames:
        p = Path(data_dir) / fname
        if p.is_file():
            return p
    raise FileNotFoundError(f"{name}: none of {spec.filenames} found in {data_dir}")


@dataclass(frozen=True, eq=False)
class TaskDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    d_native: int

    def __post_init__(self):
        for arr in (self.features, self.labels, self.train, self.validation, self.test):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def split(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "val": self.validation, "test": self.test}

    def indices(self, which: str) -> np.ndarray:
        if which == "full":
            return np.arange(self.n)
        aliases = {"validation": "val"}
        try:
            return self.split[aliases.get(which, which)]
        except KeyError:
            raise ValueError(f"unknown split {which!r}") from None


def minmax_normalize(matrix: np.ndarray) -> np.ndarray:
    """Column-wise min-max scaling to [0, 1]; constant columns become 0."""
    m = np.asarray(matrix, dtype=float)
    lo = m.min(axis=0)
    span = m.max(axis=0) - lo
    out = np.zeros_like(m)
    ok = span > 0
    out[:, ok] = (m[:, ok] - lo[ok]) / span[ok]
    return out


def _parse_float(token: str, row: int, col: int) -> float:
    if token in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise DatasetError(f"row {row + 1}, column {col}: non-numeric value {token!r}") from None


def encode_features(raw: RawDataset) -> tuple[np.ndarray, np.ndarray]:
    """Numeric (unnormalised, imputed) feature matrix and raw class values.

    Categorical columns are integer-coded by sorted level; missing values in
    any column take the column median of the coded values.
    """
    spec = task_spec(raw.name)
    cc = raw.class_column
    attrs = [row[:cc] + row[cc + 1 :] for row in raw.rows]
    classes = np.array([_parse_float(row[cc], r, cc) for r, row in enumerate(raw.rows)])
    if np.isnan(classes).any():
        raise DatasetError(f"{raw.name}: missing class label")
    n_attr = len(attrs[0])
    feats = np.empty((len(attrs), n_attr))
    for c in range(n_attr):
        tokens = [a[c] for a in attrs]
        if c in spec.categorical:
            levels = sorted({t for t in tokens if t not in MISSING_TOKENS}, key=_level_key)
            code = {t: float(i) for i, t in enumerate(levels)}
            feats[:, c] = [code.get(t, np.nan) for t in tokens]
        else:
            feats[:, c] = [_parse_float(t, r, c) for r, t in enumerate(tokens)]
        col = feats[:, c]
        missing = np.isnan(col)
        if missing.all():
            raise DatasetError(f"{raw.name}: column {c} has no values")
        if missing.any():
            col[missing] = np.median(col[~missing])
    return feats, classes


def _level_key(token: str):
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


def stratified_split(labels: np.ndarray, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class seeded shuffle, then 60/20/20 cut of each class (rounded)."""
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_train = round(SPLIT_FRACTIONS[0] * len(idx))
        n_val = round(SPLIT_FRACTIONS[1] * len(idx))
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train : n_train + n_val])
        parts[2].append(idx[n_train + n_val :])
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


def preprocess(raw: RawDataset, d_common: int = D_COMMON, seed=0) -> TaskDataset:
    spec = task_spec(raw.name)
    feats, classes = encode_features(raw)
    d_native = feats.shape[1]
    if d_common < d_native:
        raise DatasetError(f"d_common={d_common} is smaller than {raw.name}'s {d_native} features")
    labels = (classes == spec.positive_label).astype(np.int64)
    if len(np.unique(labels)) != 2:
        raise DatasetError(f"{raw.name}: expected two classes")
    features = np.zeros((len(labels), d_common))
    features[:, :d_native] = minmax_normalize(feats)
    train, val, test = stratified_split(labels, seed)
    return TaskDataset(raw.name, features, labels, train, val, test, d_native)


def load_task(name: str, data_dir=None, seed=0, d_common: int = D_COMMON) -> TaskDataset:
    return preprocess(load_dataset(name, find_task_file(name, data_dir)), d_common, seed)


@dataclass(frozen=True)
class SesFilter:
    fraction: float
    seed: int
    removed_indices: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "seed": self.seed, "removed": list(self.removed_indices)}


def make_ses_filter(data: TaskDataset, fraction: float, seed) -> SesFilter:
    """Remove round-half-even(fraction * |train|) training rows, uniformly."""
    if not 0.0 <= fraction <= SES_MAX:
        raise ValueError(f"SES fraction {fraction} outside [0, {SES_MAX}]")
    rng = np.random.default_rng(seed)
    k = round(fraction * len(data.train))
    removed = np.sort(rng.choice(data.train, size=k, replace=False)) if k else np.empty(0, dtype=np.int64)
    return SesFilter(float(fraction), _seed_repr(seed), tuple(int(i) for i in removed))


def random_ses_filter(data: TaskDataset, seed) -> SesFilter:
    """SES filter with fraction drawn uniformly from [0, 0.4]."""
    rng = np.random.default_rng(seed)
    fraction = float(rng.uniform(0.0, SES_MAX))
    return make_ses_filter(data, fraction, rng)


def _seed_repr(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return -1


def apply_ses(data: TaskDataset, ses: SesFilter | None) -> np.ndarray:
    """Training indices that survive the filter; other splits are untouched."""
    if ses is None or not ses.removed_indices:
        return data.train.copy()
    removed = np.asarray(ses.removed_indices, dtype=np.int64)
    if removed.min() < 0 or removed.max() >= data.n:
        raise ValueError("SES filter indexes rows outside this dataset")
    if not np.isin(removed, data.train).all():
        raise ValueError("SES filter removes rows that are not in the training split")
    return np.setdiff1d(data.train, removed)


def write_task_csv(data: TaskDataset, path) -> None:
    names = np.empty(data.n, dtype=object)
    for split, idx in data.split.items():
        names[idx] = split
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(data.width)] + ["label", "split"])
        for i in range(data.n):
            w.writerow([repr(float(v)) for v in data.features[i]] + [int(data.labels[i]), names[i]])


def read_task_csv(path, name: str, d_native: int | None = None) -> TaskDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-2:] != ["label", "split"]:
            raise DatasetError(f"{path}: not a preprocessed task file")
        rows = list(reader)
    if not rows:
        raise DatasetError(f"{path}: no rows")
    features = np.array([[float(v) for v in r[:-2]] for r in rows])
    labels = np.array([int(r[-2]) for r in rows], dtype=np.int64)
    splits = np.array([r[-1] for r in rows])
    unknown = set(splits) - {"train", "val", "test"}
    if unknown:
        raise DatasetError(f"{path}: unknown split names {sorted(unknown)}")
    if d_native is None:
        nonzero = np.flatnonzero(np.any(features != 0, axis=0))
        d_native = int(nonzero[-1]) + 1 if nonzero.size else 0
    return TaskDataset(
        name,
        features,
        labels,
        np.flatnonzero(splits == "train"),
        np.flatnonzero(splits == "val"),
        np.flatnonzero(splits == "test"),
        d_native,
    )
