"""Completion optimizers that refine a TT against observed entries.

The objective is the squared error over the observed set,
``sum_w (X[w] - y[w])**2``. Ranks and mode sizes are never changed.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import DivergenceError, ShapeError
from .tt import TensorTrain


@dataclass
class CompletionOptions:
    method: str = "als"
    n_iters: int = 100
    als_ridge: float | None = None  # None: 1e-10 * var(y)
    sgd_lr: float | None = None  # None: 1e-2 / sqrt(max rank)
    sgd_decay: float = 1e-3
    sgd_batch: int = 64
    seed: int = 0
    trace_every: int = 1
    tol: float = 0.0  # stop when the relative objective decrease per iteration falls below

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in ("als", "sgd"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.n_iters < 0 or self.trace_every < 1 or self.sgd_batch < 1:
            raise ValueError("iteration counts and batch size must be positive")
        if self.als_ridge is not None and self.als_ridge < 0:
            raise ValueError("ridge must be non-negative")


@dataclass
class CompletionTrace:
    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    tt: TensorTrain | None = None

    def to_csv(self, timing=True):
        lines = ["iter,objective,seconds"]
        for it, obj, sec in zip(self.iters, self.objective, self.seconds):
            lines.append(f"{it},{obj!r},{sec:.6f}" if timing else f"{it},{obj!r},")
        return "\n".join(lines) + "\n"


def _check(tt, obs):
    if tuple(tt.mode_sizes) != tuple(obs.mode_sizes):
        raise ShapeError(f"TT modes {tt.mode_sizes} do not match observations {obs.mode_sizes}")


def objective(tt, obs):
    """Sum of squared residuals over the observed entries."""
    _check(tt, obs)
    if len(obs) == 0:
        return 0.0
    res = _kernels.eval_many(*tt.packed(), obs.indices - 1) - obs.values
    return float(res @ res)


def grad_cores(tt, obs):
    """Gradient of :func:`objective` restricted to ``obs`` with respect to every core."""
    _check(tt, obs)
    if len(obs) == 0:
        raise ValueError("gradient batch must be non-empty")
    flat, ps, ranks, modes = tt.packed()
    idx = obs.indices - 1
    res = _kernels.eval_many(flat, ps, ranks, modes, idx) - obs.values
    g = _kernels.grad_many(flat, ps, ranks, modes, idx, 2.0 * res)
    return _kernels.unpack(g, ps, ranks, modes)


def _interfaces(cores, idx):
    """Left products (N, r_k) of cores < k and right products (N, r_{k+1}) of cores > k."""
    d = len(cores)
    n_obs = idx.shape[0]
    left = [np.ones((n_obs, 1))] + [None] * d
    for k in range(d - 1):
        left[k + 1] = np.einsum("na,anb->nb", left[k], cores[k][:, idx[:, k], :])
    right = [None] * d
    right[d - 1] = np.ones((n_obs, 1))
    for k in range(d - 1, 0, -1):
        right[k - 1] = np.einsum("anb,nb->na", cores[k][:, idx[:, k], :], right[k])
    return left, right


def _spd_solve(a, b):
    try:
        return scipy.linalg.solve(a, b, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return np.linalg.lstsq(a, b, rcond=None)[0]


def _update_core(core, left, right, i_k, y, lam):
    """Exact proximal least-squares update of every observed slice of one core.

    For slice ``i`` with rows ``phi_w = left_w (x) right_w`` this solves
    ``min_s ||Phi s - y||^2 + lam ||s - s_old||^2``. Slices with fewer
    observations than parameters use the dual (m x m) form, whose Gram matrix
    is ``(L L^T) * (R R^T)``. Unobserved slices are untouched.
    """
    r0, n, r1 = core.shape
    p = r0 * r1
    new = core.copy()
    order = np.argsort(i_k, kind="stable")
    bounds = np.searchsorted(i_k[order], np.arange(n + 1))
    for i in range(n):
        rows = order[bounds[i]:bounds[i + 1]]
        m = rows.size
        if m == 0:
            continue
        lft, rgt = left[rows], right[rows]
        s_old = core[:, i, :]
        res = y[rows] - np.einsum("na,ab,nb->n", lft, s_old, rgt)
        if p <= m:
            phi = (lft[:, :, None] * rgt[:, None, :]).reshape(m, p)
            gm = phi.T @ phi
            reg = max(lam, 1e-12 * np.trace(gm) / p)
            gm[np.diag_indices(p)] += reg
            step = _spd_solve(gm, phi.T @ res).reshape(r0, r1)
        else:
            gm = (lft @ lft.T) * (rgt @ rgt.T)
            reg = max(lam, 1e-12 * np.trace(gm) / m)
            gm[np.diag_indices(m)] += reg
            c = _spd_solve(gm, res)
            step = (lft * c[:, None]).T @ rgt
        new[:, i, :] = s_old + step
    return new


def default_ridge(obs):
    return 1e-10 * float(np.var(obs.values)) if len(obs) else 0.0


def als_half_sweep(tt, obs, lam=None, direction="lr"):
    """Update each core once, left to right (``"lr"``) or right to left (``"rl"``).

    The last core of the direction is skipped; a full sweep is ``lr`` then
    ``rl``, so every core is updated at least once.
    """
    _check(tt, obs)
    lam = default_ridge(obs) if lam is None else lam
    cores = [np.array(c) for c in tt.cores]
    d = len(cores)
    if len(obs) == 0:
        return tt
    idx = obs.indices - 1
    y = obs.values
    left, right = _interfaces(cores, idx)
    if d == 1:
        cores[0] = _update_core(cores[0], left[0], right[0], idx[:, 0], y, lam)
        return TensorTrain(tuple(cores))
    if direction == "lr":
        for k in range(d - 1):
            cores[k] = _update_core(cores[k], left[k], right[k], idx[:, k], y, lam)
            left[k + 1] = np.einsum("na,anb->nb", left[k], cores[k][:, idx[:, k], :])
    elif direction == "rl":
        for k in range(d - 1, 0, -1):
            cores[k] = _update_core(cores[k], left[k], right[k], idx[:, k], y, lam)
            right[k - 1] = np.einsum("anb,nb->na", cores[k][:, idx[:, k], :], right[k])
    else:
        raise ValueError("direction must be 'lr' or 'rl'")
    return TensorTrain(tuple(cores))


def als_sweep(tt, obs, lam=None):
    """One left-to-right plus one right-to-left ALS half-sweep."""
    return als_half_sweep(als_half_sweep(tt, obs, lam, "lr"), obs, lam, "rl")


def complete(tt0, obs, opts=None):
    """Refine ``tt0`` with ALS sweeps or SGD steps; returns the objective trace.

    SGD draws a seeded minibatch per step and moves every core against the
    batch-mean gradient with rate ``lr / (1 + decay * t)``.
    """
    opts = CompletionOptions() if opts is None else opts
    _check(tt0, obs)
    trace = CompletionTrace()
    t0 = time.perf_counter()

    def record(it, tt):
        val = objective(tt, obs)
        if not np.isfinite(val):
            raise DivergenceError(it)
        trace.iters.append(it)
        trace.objective.append(val)
        trace.seconds.append(time.perf_counter() - t0)
        return val

    tt = tt0
    prev = record(0, tt)
    if opts.method == "als":
        lam = default_ridge(obs) if opts.als_ridge is None else opts.als_ridge
        for it in range(1, opts.n_iters + 1):
            tt = als_sweep(tt, obs, lam)
            if it % opts.trace_every == 0 or it == opts.n_iters or opts.tol > 0:
                val = record(it, tt)
                if opts.tol > 0 and prev - val <= opts.tol * prev:
                    break
                prev = val
    else:
        rng = np.random.default_rng(opts.seed)
        lr0 = opts.sgd_lr if opts.sgd_lr is not None else 1e-2 / np.sqrt(max(tt.ranks))
        flat, ps, ranks, modes = (a.copy() for a in tt.packed())
        idx_all = obs.indices - 1
        n_obs = len(obs)
        batch = min(opts.sgd_batch, n_obs)
        for it in range(1, opts.n_iters + 1):
            if n_obs == 0:
                break
            rows = rng.choice(n_obs, size=batch, replace=False)
            idx = idx_all[rows]
            res = _kernels.eval_many(flat, ps, ranks, modes, idx) - obs.values[rows]
            g = _kernels.grad_many(flat, ps, ranks, modes, idx, 2.0 * res / batch)
            lr = lr0 / (1.0 + opts.sgd_decay * (it - 1))
            if lr != 0.0:
                flat -= lr * g
            if not np.all(np.isfinite(flat)):
                raise DivergenceError(it)
            if it % opts.trace_every == 0 or it == opts.n_iters:
                tt = TensorTrain(tuple(_kernels.unpack(flat, ps, ranks, modes)))
                record(it, tt)
        tt = TensorTrain(tuple(_kernels.unpack(flat, ps, ranks, modes)))
    trace.tt = tt
    return trace
