"""Maximum-volume row selection and rank-revealing cross alternation."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegeneracyError

RANK_TOL = 1e-12


@dataclass(frozen=True)
class MaxvolResult:
    """Rows ``I`` (0-based) of a tall matrix ``M`` and ``coeffs = M @ inv(M[I])``."""

    rows: np.ndarray
    coeffs: np.ndarray
    iterations: int
    converged: bool


def numerical_rank(m, tol=RANK_TOL):
    """Count singular values above ``tol * sigma_max``."""
    s = np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _lu_rows(m):
    _, piv = scipy.linalg.lu_factor(m, check_finite=False)
    perm = np.arange(m.shape[0])
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm[: m.shape[1]].copy()


def maxvol(m, delta=0.01, max_iters=100):
    """Greedy row-swap search for an ``r x r`` submatrix of (locally) maximal volume.

    Starts from the pivots of a partial-pivoting LU and swaps in the row
    holding the largest ``|coeffs|`` entry while it exceeds ``1 + delta``.
    Ties go to the lowest (row, column) pair. Raises
    :class:`DegeneracyError` when ``m`` lacks full column rank.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("maxvol expects a matrix")
    n, r = m.shape
    if not n >= r >= 1:
        raise ValueError(f"maxvol needs n >= r >= 1, got {m.shape}")
    rank = numerical_rank(m)
    if rank < r:
        raise DegeneracyError(f"{n}x{r} matrix is rank deficient", rank)

    rows = _lu_rows(m)
    coeffs = scipy.linalg.solve(m[rows].T, m.T, check_finite=False).T
    bound = 1.0 + delta
    iterations = 0
    converged = False
    while True:
        flat = int(np.argmax(np.abs(coeffs)))
        i, j = divmod(flat, r)
        if abs(coeffs[i, j]) <= bound:
            converged = True
            break
        if iterations >= max_iters:
            break
        # Sherman-Morrison update for replacing row rows[j] by row i
        row = coeffs[i].copy()
        row[j] -= 1.0
        coeffs -= np.outer(coeffs[:, j] / coeffs[i, j], row)
        rows[j] = i
        iterations += 1

    coeffs = scipy.linalg.solve(m[rows].T, m.T, check_finite=False).T
    coeffs[rows] = np.eye(r)
    return MaxvolResult(rows=rows, coeffs=coeffs, iterations=iterations, converged=converged)


def _as_accessor(m):
    if callable(m):
        return m
    arr = np.asarray(m, dtype=np.float64)
    return lambda rows, cols: arr[np.ix_(rows, cols)]


def rank_reveal_columns(m, r, sweeps=2, seed=0, shape=None, pool=None, delta=0.01, max_iters=100):
    """Pick ``r`` well-conditioned columns of an ``n x N`` matrix by row/column alternation.

    ``m`` is either an array or an accessor ``m(rows, cols) -> submatrix`` (then
    ``shape`` is required). Columns are searched within a seeded candidate
    pool of ``pool`` columns (all columns when ``N <= pool``), so at most
    ``n * pool + sweeps * r * pool`` entries are requested. The starting columns
    come from a column-pivoted QR of the pool; each sweep then runs maxvol
    on the current columns to get rows and on those rows to get columns.
    Raises :class:`DegeneracyError` if fewer than ``r`` independent columns
    are found.
    """
    if shape is None:
        shape = np.shape(m)
    n, n_cols = int(shape[0]), int(shape[1])
    if not 1 <= r <= min(n, n_cols):
        raise ValueError(f"rank {r} incompatible with shape {shape}")
    get = _as_accessor(m)
    rng = np.random.default_rng(seed)
    all_rows = np.arange(n)

    if pool is None:
        pool = max(4 * r, 32)
    if pool >= n_cols:
        cand = np.arange(n_cols)
    else:
        cand = np.sort(rng.choice(n_cols, size=pool, replace=False))
    c = np.asarray(get(all_rows, cand), dtype=np.float64)
    rank = numerical_rank(c)
    if rank < r:
        raise DegeneracyError(f"sampled columns span fewer than {r} dimensions", rank)
    _, _, piv = scipy.linalg.qr(c, mode="economic", pivoting=True)
    cols = cand[piv[:r]]

    for _ in range(sweeps):
        c = np.asarray(get(all_rows, cols), dtype=np.float64)
        rows = maxvol(c, delta, max_iters).rows
        rr = np.asarray(get(rows, cand), dtype=np.float64)
        cols = cand[maxvol(rr.T, delta, max_iters).rows]
    return cols


def skeleton(m, rows, cols):
    """Cross approximation ``C @ inv(A_hat) @ R`` of a dense matrix."""
    m = np.asarray(m, dtype=np.float64)
    c = m[:, cols]
    a_hat = m[np.ix_(rows, cols)]
    return c @ np.linalg.solve(a_hat, m[rows])
