"""TT-cross approximation of a black-box function on a grid."""

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .maxvol import maxvol
from .tt import TensorTrain, check_ranks, max_ranks, tt_round


class BlackBox:
    """Deterministic function of 1-based multi-indices with an evaluation counter.

    With ``batched=True`` the wrapped function receives an ``(N, d)`` integer
    array and returns ``N`` values; otherwise it is called once per index
    with a tuple.
    """

    def __init__(self, func, batched=True):
        self.func = func
        self.batched = batched
        self.evals = 0
        self._lock = threading.Lock()

    def _call(self, indices):
        if self.batched:
            vals = np.asarray(self.func(indices), dtype=np.float64).reshape(-1)
        else:
            vals = np.array([float(self.func(tuple(int(i) for i in row))) for row in indices])
        if vals.shape[0] != indices.shape[0]:
            raise ValueError(f"returned {vals.shape[0]} values for {indices.shape[0]} indices")
        return vals

    def __call__(self, indices):
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        try:
            vals = self._call(indices)
            bad = ~np.isfinite(vals)
            if bad.any():
                row = indices[np.argmax(bad)]
                raise EvaluationError(row, "non-finite value")
        except EvaluationError:
            raise
        except Exception as exc:
            raise EvaluationError(self._locate_failure(indices, exc), exc) from exc
        with self._lock:
            self.evals += indices.shape[0]
        return vals

    def _locate_failure(self, indices, exc):
        if not self.batched or indices.shape[0] == 1:
            for row in indices:
                try:
                    self._call(row[None, :])
                except Exception:
                    return row
            return indices[0]
        for row in indices:
            try:
                v = self._call(row[None, :])
                if not np.all(np.isfinite(v)):
                    return row
            except Exception:
                return row
        return indices[0]


@dataclass
class CrossReport:
    tt: TensorTrain
    evals: int
    final_ranks: tuple
    sweeps_used: int
    adapted: bool = False
    saturated: bool = False
    rank_reduced: bool = False
    working_ranks: list = field(default_factory=list)
    left_sets: list = field(default_factory=list, repr=False)
    right_sets: list = field(default_factory=list, repr=False)


class _CachedEvaluator:
    """Memoizes black-box values by multi-index so repeated fibers are free."""

    def __init__(self, f, mode_sizes, cache=None):
        self.f = f
        self.mode_sizes = np.asarray(mode_sizes, dtype=np.int64)
        self.linear = math.prod(int(n) for n in mode_sizes) < 2**62
        if self.linear:
            strides = np.ones(len(mode_sizes), dtype=np.int64)
            for k in range(1, len(mode_sizes)):
                strides[k] = strides[k - 1] * self.mode_sizes[k - 1]
            self.strides = strides
        self.cache = {} if cache is None else cache

    def _keys(self, idx0):
        if self.linear:
            return (idx0 @ self.strides).tolist()
        return [row.tobytes() for row in idx0]

    def __call__(self, idx0):
        keys = self._keys(idx0)
        out = np.empty(len(keys))
        missing = []
        for t, key in enumerate(keys):
            v = self.cache.get(key)
            if v is None:
                missing.append(t)
            else:
                out[t] = v
        if missing:
            miss = np.asarray(missing)
            # one call per distinct index, even if repeated within this batch
            uniq = {}
            for t in missing:
                uniq.setdefault(keys[t], t)
            first = np.fromiter(uniq.values(), dtype=np.int64)
            vals = self.f(idx0[first] + 1)
            for key, v in zip(uniq, vals):
                self.cache[key] = float(v)
            out[miss] = [self.cache[keys[t]] for t in missing]
        return out


def _fibers(left, n, right):
    """Index array (rL, n, rR, d) of 0-based multi-indices (left[a], i, right[b])."""
    rl, rr = left.shape[0], right.shape[0]
    kl, kr = left.shape[1], right.shape[1]
    out = np.empty((rl, n, rr, kl + 1 + kr), dtype=np.int64)
    out[..., :kl] = left[:, None, None, :]
    out[..., kl] = np.arange(n)[None, :, None]
    out[..., kl + 1:] = right[None, None, :, :]
    return out.reshape(-1, kl + 1 + kr)


def _interpolating_basis(mat, rank_tol, delta, max_iters):
    """Orthonormal column basis truncated to numerical rank, and its maxvol."""
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s[0] == 0:
        q = 1
    else:
        q = max(1, int(np.count_nonzero(s > rank_tol * s[0])))
    return maxvol(u[:, :q], delta, max_iters)


def _random_right_sets(mode_sizes, ranks, rng):
    d = len(mode_sizes)
    sets = [None] * (d + 1)
    sets[d] = np.zeros((1, 0), dtype=np.int64)
    for k in range(1, d):
        tail = mode_sizes[k:]
        total = math.prod(tail)
        want = min(ranks[k], total)
        if total < 2**62:
            flat = rng.choice(total, size=want, replace=False)
            sets[k] = np.stack(np.unravel_index(flat, tail, order="F"), axis=1).astype(np.int64)
        else:
            rows = {}
            while len(rows) < want:
                row = tuple(int(rng.integers(n)) for n in tail)
                rows.setdefault(row, None)
            sets[k] = np.array(list(rows), dtype=np.int64)
    return sets


def tt_cross(f, mode_sizes, ranks, sweeps=2, seed=0, rank_tol=1e-12, delta=0.01,
             max_iters=100, _cache=None):
    """Cross-approximate the black box ``f`` by a TT with (at most) the given ranks.

    One sweep is a left-to-right pass followed by a right-to-left pass over
    the unfoldings. Each step evaluates the fibers through the current row
    and column multi-index sets, takes an orthonormal basis of them
    (truncated to numerical rank ``rank_tol``), and sets the core to
    ``Q @ inv(Q[I])`` with ``I`` chosen by maxvol. The returned cores come
    from the final right-to-left pass.
    """
    if not isinstance(f, BlackBox):
        f = BlackBox(f)
    mode_sizes, ranks = check_ranks(mode_sizes, ranks)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    d = len(mode_sizes)
    start_evals = f.evals
    evaluate = _CachedEvaluator(f, mode_sizes, _cache)
    cap = max_ranks(mode_sizes)
    ranks = tuple(min(r, c) for r, c in zip(ranks, cap))
    rng = np.random.default_rng(seed)

    empty = np.zeros((1, 0), dtype=np.int64)
    right = _random_right_sets(mode_sizes, ranks, rng)
    left = [None] * d
    left[0] = empty
    cores = [None] * d
    reduced = False

    for _ in range(sweeps):
        for k in range(d - 1):
            n = mode_sizes[k]
            rl, rr = left[k].shape[0], right[k + 1].shape[0]
            vals = evaluate(_fibers(left[k], n, right[k + 1])).reshape(rl * n, rr)
            mv = _interpolating_basis(vals, rank_tol, delta, max_iters)
            q = mv.rows.size
            reduced |= q < min(rl * n, rr)
            a, i = np.divmod(mv.rows, n)
            left[k + 1] = np.column_stack([left[k][a], i])
        for k in range(d - 1, 0, -1):
            n = mode_sizes[k]
            rl, rr = left[k].shape[0], right[k + 1].shape[0]
            vals = evaluate(_fibers(left[k], n, right[k + 1])).reshape(rl, n * rr).T
            mv = _interpolating_basis(vals, rank_tol, delta, max_iters)
            q = mv.rows.size
            reduced |= q < min(rl, n * rr)
            cores[k] = mv.coeffs.T.reshape(q, n, rr)
            i, b = np.divmod(mv.rows, rr)
            right[k] = np.column_stack([i, right[k + 1][b]])
    n = mode_sizes[0]
    cores[0] = evaluate(_fibers(empty, n, right[1])).reshape(1, n, right[1].shape[0])

    tt = TensorTrain(tuple(cores))
    return CrossReport(
        tt=tt,
        evals=f.evals - start_evals,
        final_ranks=tt.ranks,
        sweeps_used=sweeps,
        rank_reduced=reduced,
        working_ranks=[ranks],
        left_sets=[s + 1 for s in left],
        right_sets=[None] + [s + 1 for s in right[1:]],
    )


def tt_cross_adaptive(f, mode_sizes, r0=2, r_max=64, round_tol=1e-6, growth=2.0, sweeps=2,
                      seed=0, rank_tol=1e-12):
    """TT-cross with rank growth until recompression reduces every saturated rank.

    Each pass runs :func:`tt_cross` with a uniform working rank ``r`` (capped
    per bond by the grid), rounds the result to ``round_tol``, and grows
    ``r`` by ``growth`` if some bond kept its full working rank while a
    larger rank was still possible there. Hitting ``r_max`` while saturated
    sets ``saturated=True`` and issues a warning instead of raising.
    """
    if not 1 <= r0 <= r_max:
        raise ValueError("need 1 <= r0 <= r_max")
    if round_tol <= 0 or growth <= 1:
        raise ValueError("need round_tol > 0 and growth > 1")
    if not isinstance(f, BlackBox):
        f = BlackBox(f)
    mode_sizes = tuple(int(n) for n in mode_sizes)
    d = len(mode_sizes)
    cap = max_ranks(mode_sizes)
    start_evals = f.evals
    cache = {}
    r = int(r0)
    history = []
    total_sweeps = 0
    reduced = False
    p = 0
    while True:
        working = tuple([1] + [min(r, cap[k]) for k in range(1, d)] + [1])
        rep = tt_cross(f, mode_sizes, working, sweeps=sweeps, seed=[seed, p],
                       rank_tol=rank_tol, _cache=cache)
        total_sweeps += sweeps
        reduced |= rep.rank_reduced
        history.append(working)
        rounded = tt_round(rep.tt, round_tol)
        saturated = [
            k for k in range(1, d)
            if rounded.ranks[k] >= working[k] and working[k] < cap[k]
        ]
        if not saturated or r >= r_max:
            break
        r = min(max(r + 1, math.ceil(growth * r)), r_max)
        p += 1
    hit_cap = bool(saturated)
    if hit_cap:
        warnings.warn(
            f"TT-cross ranks saturated at r_max={r_max} (bonds {saturated})",
            RuntimeWarning,
            stacklevel=2,
        )
    return CrossReport(
        tt=rounded,
        evals=f.evals - start_evals,
        final_ranks=rounded.ranks,
        sweeps_used=total_sweeps,
        adapted=len(history) > 1,
        saturated=hit_cap,
        rank_reduced=reduced,
        working_ranks=history,
        left_sets=rep.left_sets,
        right_sets=rep.right_sets,
    )
