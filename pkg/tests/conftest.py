import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from bgtransfer.dataio import load_dataset, preprocess

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO = Path(__file__).resolve().parents[1]
VENDORED_DATA = REPO / "data"


def synthetic_rows(name: str, n: int, seed: int = 0) -> list[str]:
    """Rows in the raw file format of ``name`` with a learnable class.

    These are test fixtures only; they share the column layout of the real
    files, not their content.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    lines = []
    for i in range(n):
        if name == "banknote":
            x = rng.normal(2.0 * y[i] - 1.0, 1.0, 4)
            lines.append(",".join(f"{v:.5f}" for v in x) + f",{y[i]}")
        elif name == "german":
            x = rng.integers(1, 5, 24) + 2 * y[i] * (np.arange(24) < 3)
            lines.append(" ".join(str(v) for v in x) + f" {1 + y[i]}")
        elif name == "australian":
            cont = rng.normal(3.0 * y[i], 1.0, 6)
            cat = rng.integers(0, 3, 8)
            row = []
            ci = ki = 0
            for c in range(14):
                if c in (0, 3, 4, 5, 7, 8, 10, 11):
                    row.append(str(cat[ki]))
                    ki += 1
                else:
                    row.append(f"{cont[ci]:.3f}")
                    ci += 1
            lines.append(" ".join(row) + f" {y[i]}")
        else:
            raise ValueError(name)
    return lines


FILENAMES = {"banknote": "banknote.txt", "german": "german.data-numeric", "australian": "australian.dat"}


def write_synthetic(directory: Path, name: str, n: int = 200, seed: int = 0) -> Path:
    path = Path(directory) / FILENAMES[name]
    path.write_text("\n".join(synthetic_rows(name, n, seed)) + "\n")
    return path


@pytest.fixture
def synthetic_dir(tmp_path):
    for k, name in enumerate(FILENAMES):
        write_synthetic(tmp_path, name, 200, seed=k)
    return tmp_path


@pytest.fixture(scope="session")
def synthetic_tasks(tmp_path_factory):
    d = tmp_path_factory.mktemp("synthetic")
    return {
        name: preprocess(load_dataset(name, write_synthetic(d, name, 160, seed=k)), seed=k)
        for k, name in enumerate(FILENAMES)
    }


@pytest.fixture(scope="session")
def german_real():
    path = VENDORED_DATA / "german.data-numeric"
    if not path.is_file():
        pytest.skip("vendored german file not present")
    return preprocess(load_dataset("german", path), seed=0)
