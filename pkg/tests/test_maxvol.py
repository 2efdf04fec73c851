import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttgp.errors import DegeneracyError
from ttgp.maxvol import maxvol, numerical_rank, rank_reveal_columns, skeleton


def best_single_swap_ratio(m, rows):
    """Largest |det| ratio reachable by replacing one selected row (brute force)."""
    base = abs(np.linalg.det(m[rows]))
    best = 0.0
    for pos, other in itertools.product(range(len(rows)), range(m.shape[0])):
        if other in rows:
            continue
        trial = rows.copy()
        trial[pos] = other
        best = max(best, abs(np.linalg.det(m[trial])) / base)
    return best


def test_identity_block():
    m = np.array([[1.0, 0], [0, 1], [0, 0], [0, 0]])
    res = maxvol(m, delta=0.01)
    assert sorted(res.rows.tolist()) == [0, 1]
    np.testing.assert_allclose(res.coeffs[:2], np.eye(2), atol=1e-12)
    assert res.converged


def test_single_column():
    res = maxvol(np.array([[1.0], [2.0], [-3.0]]))
    assert res.rows.tolist() == [2]
    np.testing.assert_allclose(res.coeffs.ravel(), [-1 / 3, -2 / 3, 1.0], rtol=1e-14)


def test_random_50x5_seed_11_is_locally_optimal():
    m = np.random.default_rng(11).standard_normal((50, 5))
    res = maxvol(m)
    assert res.converged
    assert best_single_swap_ratio(m, list(res.rows)) <= 1.01


def test_tie_breaks_to_lowest_row():
    res = maxvol(np.array([[2.0], [-2.0], [1.0]]))
    assert res.rows.tolist() == [0]


def test_rank_deficient():
    m = np.ones((6, 2))
    with pytest.raises(DegeneracyError) as err:
        maxvol(m)
    assert err.value.rank == 1


def test_zero_matrix():
    with pytest.raises(DegeneracyError) as err:
        maxvol(np.zeros((4, 2)))
    assert err.value.rank == 0


def test_bad_shape():
    with pytest.raises(ValueError):
        maxvol(np.ones((2, 3)))


def test_non_convergence_is_reported():
    m = np.random.default_rng(0).standard_normal((200, 6))
    res = maxvol(m, delta=0.0, max_iters=0)
    assert res.iterations == 0
    assert not res.converged or np.abs(res.coeffs).max() <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 6), st.integers(0, 30))
def test_invariants(seed, r, extra):
    m = np.random.default_rng(seed).standard_normal((r + extra, r))
    res = maxvol(m)
    assert len(set(res.rows.tolist())) == r
    np.testing.assert_allclose(res.coeffs[res.rows], np.eye(r), atol=1e-10)
    np.testing.assert_allclose(res.coeffs @ m[res.rows], m, atol=1e-9 * np.abs(m).max())
    if res.converged:
        assert np.abs(res.coeffs).max() <= 1.01 + 1e-12


def test_determinism():
    m = np.random.default_rng(3).standard_normal((40, 4))
    a, b = maxvol(m), maxvol(m)
    assert np.array_equal(a.rows, b.rows) and np.array_equal(a.coeffs, b.coeffs)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.diag([1.0, 1e-13, 0])) == 1
    assert numerical_rank(np.eye(4)) == 4


class TestRankReveal:
    def test_rank_one_reconstruction(self):
        u = np.array([1.0, -2.0, 3.0, 0.5])
        v = np.array([2.0, 1.0, -1.0, 4.0, 0.25, 3.0])
        m = np.outer(u, v)
        cols = rank_reveal_columns(m, 1, seed=0)
        rows = maxvol(m[:, cols]).rows
        np.testing.assert_allclose(skeleton(m, rows, cols), m, atol=1e-12)

    def test_diag_matches_best_rank_two(self):
        m = np.diag([5.0, 4, 3, 2, 1])
        cols = rank_reveal_columns(m, 2, seed=0)
        rows = maxvol(m[:, cols]).rows
        err = np.linalg.norm(m - skeleton(m, rows, cols))
        assert err <= np.sqrt(3**2 + 2**2 + 1**2) + 1e-12

    def test_zero_matrix(self):
        with pytest.raises(DegeneracyError):
            rank_reveal_columns(np.zeros((4, 5)), 1)

    def test_accessor_never_materializes(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((8, 3)), rng.standard_normal((3, 10_000))
        seen = []

        def access(rows, cols):
            seen.append(len(rows) * len(cols))
            return a[rows] @ b[:, cols]

        cols = rank_reveal_columns(access, 3, shape=(8, 10_000), seed=1)
        assert len(cols) == 3
        assert max(seen) < 8 * 10_000 // 10
        m = a @ b
        rows = maxvol(m[:, cols]).rows
        np.testing.assert_allclose(skeleton(m, rows, cols), m, atol=1e-9 * np.abs(m).max())

    def test_deterministic_with_seed(self):
        m = np.random.default_rng(5).standard_normal((10, 40))
        assert np.array_equal(rank_reveal_columns(m, 4, seed=2), rank_reveal_columns(m, 4, seed=2))
