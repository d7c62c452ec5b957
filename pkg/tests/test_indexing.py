import numpy as np
import pytest

from dyadicgp import indexing, kernel
from dyadicgp.grid import build_grid


def test_tsi_worked_examples():
    t = indexing.tsi_indices(np.array([0.3]), 3)
    assert np.array_equal(t, [[1, 1, 2]])
    j = indexing.assemble_global_indices(t)
    assert np.array_equal(j, [[0, 1, 2, 3, 6]])
    # the right endpoint activates the last basis of every level
    t = indexing.tsi_indices(np.array([1.0]), 3)
    assert np.array_equal(t, [[1, 2, 4]])
    # x = 0 clamps the raw t = 0 up to 1; the basis value there is zero anyway
    t = indexing.tsi_indices(np.array([0.0]), 3)
    assert np.array_equal(t, [[1, 1, 1]])
    assert kernel.interior_basis(1, 1, 0.0, 1.0) == 0.0


def test_tsi_domain_errors():
    with pytest.raises(ValueError):
        indexing.tsi_indices(np.array([-0.1]), 3)
    with pytest.raises(ValueError):
        indexing.tsi_indices(np.array([1.0001]), 3)
    with pytest.raises(FloatingPointError):
        indexing.tsi_indices(np.array([np.nan]), 3)
    with pytest.raises(ValueError):
        indexing.tsi_indices(np.array([0.5]), 0)


def test_tsi_matches_brute_force_random():
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 1, 4000)
    depth = 9
    m_fast = 2 * indexing.tsi_indices(x, depth) - 1
    m_brute = indexing.brute_force_indices(x, depth)
    assert np.array_equal(m_fast, m_brute)


def test_brute_force_ties_go_to_smaller_m():
    # x = 0.5 at level 2 is equidistant from 1/4 and 3/4
    m = indexing.brute_force_indices(np.array([0.5]), 2)
    assert m[0, 1] == 1
    t = indexing.tsi_indices(np.array([0.5]), 2)
    assert 2 * t[0, 1] - 1 == 1
    # and both selected functions vanish at the tie point
    assert kernel.interior_basis(2, 1, 0.5, 1.0) == 0.0


def test_active_slot_positions_are_distinct_and_count_l_plus_2():
    rng = np.random.default_rng(5)
    for depth in (1, 4, 7, 10):
        x = rng.uniform(0, 1, (50, 2))
        _, pos = indexing.sparse_features(x, build_grid(depth), 1.0)
        assert pos.shape == (50, 2, depth + 2)
        flat = pos.reshape(-1, depth + 2)
        for row in flat[:: max(1, len(flat) // 17)]:
            assert np.unique(row).size == depth + 2


def test_scatter_equals_dense_bitwise():
    rng = np.random.default_rng(2)
    grid = build_grid(6)
    x = rng.uniform(0, 1, (200, 3))
    # include awkward inputs: exact dyadic points and the domain edges
    x[0, 0] = 0.0
    x[1, 0] = 1.0
    x[2, 1] = 0.5
    x[3, 2] = 0.25
    for theta in (0.5, 1.0, 7.3):
        vals, pos = indexing.sparse_features(x, grid, theta)
        scattered = indexing.scatter_features(vals, pos, grid.size)
        dense = indexing.dense_features(x, grid, theta)
        assert np.array_equal(scattered, dense)


def test_dense_size_guard():
    grid = build_grid(14)
    x = np.zeros((4000, 1))
    with pytest.raises(ValueError, match="cells"):
        indexing.dense_features(x, grid, 1.0)


def test_gather_weights_layout():
    grid = build_grid(2)  # 5 slots
    d, out = 2, 3
    w = np.arange(d * grid.size * out, dtype=float).reshape(d * grid.size, out)
    pos = np.array([[[0, 4], [1, 2]]])  # batch of 1
    got = indexing.gather_weights(w, pos, d)
    assert got.shape == (1, d, 2, out)
    # feature 0 reads rows 0 and 4; feature 1 reads rows 5 + {1, 2}
    assert np.array_equal(got[0, 0, 0], w[0])
    assert np.array_equal(got[0, 0, 1], w[4])
    assert np.array_equal(got[0, 1, 0], w[6])
    assert np.array_equal(got[0, 1, 1], w[7])


def test_gather_weights_validation():
    w = np.zeros((10, 1))
    with pytest.raises(ValueError):
        indexing.gather_weights(w, np.zeros((1, 3, 2), dtype=int), 3)
    with pytest.raises(ValueError):
        indexing.gather_weights(w, np.array([[[5]]]), 2)
