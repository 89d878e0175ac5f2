import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bgtransfer import relatedness as rel


def test_pair_distance_oracle():
    # ||(3, 4)|| / 2
    assert rel.pair_distance(np.array([3.0, 0.0]), np.array([0.0, -4.0])) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        rel.pair_distance(np.zeros(2), np.zeros(3))


def test_mean_pair_distance_all_pairs():
    a = [np.array([0.0, 0.0])]
    b = [np.array([2.0, 0.0]), np.array([0.0, 4.0])]
    assert rel.mean_pair_distance(a, b) == pytest.approx((1.0 + 2.0) / 2)


def test_mean_pair_distance_sampling_is_seeded():
    rng = np.random.default_rng(0)
    a = [rng.normal(size=5) for _ in range(6)]
    b = [rng.normal(size=5) for _ in range(6)]
    x = rel.mean_pair_distance(a, b, rng=3, max_pairs=10)
    assert x == rel.mean_pair_distance(a, b, rng=3, max_pairs=10)
    with pytest.raises(ValueError):
        rel.mean_pair_distance([a[0]], [b[0]], skip_same=True)


snapshot_lists = st.lists(arrays(np.float64, 6, elements=st.floats(-3, 3)), min_size=1, max_size=4)


@given(a=snapshot_lists, b=snapshot_lists, c=snapshot_lists)
def test_matrix_symmetric_with_zero_diagonal(a, b, c):
    m = rel.relatedness({"x": a, "y": b, "z": c}, seed=0)
    np.testing.assert_array_equal(m.values, m.values.T)
    assert not np.diag(m.values).any()
    assert (m.values >= 0).all()
    assert m["x", "y"] == m["y", "x"]


def test_matrix_rejects_mixed_lengths():
    with pytest.raises(ValueError):
        rel.relatedness({"x": [np.zeros(3)], "y": [np.zeros(4)]})
    with pytest.raises(ValueError):
        rel.relatedness({"x": [np.zeros(3)], "y": []})


def test_csv_roundtrip(tmp_path):
    m = rel.relatedness({"a": [np.zeros(4)], "b": [np.ones(4)]})
    m.to_csv(tmp_path / "r.csv")
    back = rel.RelatednessMatrix.from_csv(tmp_path / "r.csv")
    assert back.tasks == ("a", "b")
    np.testing.assert_allclose(back.values, m.values, rtol=1e-5)
    assert back["a", "b"] == pytest.approx(2 / 4)


def test_reference_nets_shape_and_determinism(synthetic_tasks):
    task = synthetic_tasks["banknote"]
    nets = rel.train_reference_nets(task, 2, seed=1, hidden=6, epochs=5)
    assert len(nets) == 2 and nets[0].size == 6 * (task.width + 1) + 7
    again = rel.train_reference_nets(task, 2, seed=1, hidden=6, epochs=5, jobs=2)
    for x, y in zip(nets, again):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(nets[0], nets[1])


def test_reference_nets_give_up_after_retries(synthetic_tasks):
    with pytest.raises(RuntimeError, match="diverged"):
        rel.train_reference_nets(synthetic_tasks["german"], 1, seed=0, params=(80.0, 9.0, 6.0), hidden=3, epochs=40)


def test_reference_params_cover_all_tasks():
    assert set(rel.REFERENCE_PARAMS) == {"australian", "german", "banknote"}
