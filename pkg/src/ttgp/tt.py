"""Tensor-train representation and its basic algebra.

Multi-indices on the public surface are 1-based. Dense tensors are numpy
arrays of shape ``mode_sizes``; where a flat linearization is needed
(files, unfoldings exchanged with other tools) the first index runs fastest.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError, SizeError

DENSE_CAP = 10**7


@dataclass(frozen=True, eq=False)
class TensorTrain:
    """A d-way tensor stored as a chain of cores of shape ``(r[k-1], n[k], r[k])``."""

    cores: tuple

    def __post_init__(self):
        cores = tuple(np.array(c, dtype=np.float64) for c in self.cores)
        if not cores:
            raise ShapeError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3 or min(c.shape) < 1:
                raise ShapeError(f"core {k} has invalid shape {c.shape}")
            if k and cores[k - 1].shape[2] != c.shape[0]:
                raise ShapeError(
                    f"rank mismatch between cores {k - 1} and {k}: "
                    f"{cores[k - 1].shape[2]} != {c.shape[0]}"
                )
            c.setflags(write=False)
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks r_0 and r_d must equal 1")
        object.__setattr__(self, "cores", cores)

    @property
    def d(self):
        return len(self.cores)

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[0] for c in self.cores) + (1,)

    @property
    def num_params(self):
        return sum(c.size for c in self.cores)

    def packed(self):
        """Packed cores for the batch kernels (cached)."""
        try:
            return self.__dict__["_packed"]
        except KeyError:
            p = _kernels.pack(self.cores)
            object.__setattr__(self, "_packed", p)
            return p

    def __repr__(self):
        return f"TensorTrain(mode_sizes={self.mode_sizes}, ranks={self.ranks})"


def check_ranks(mode_sizes, ranks):
    mode_sizes = tuple(int(n) for n in mode_sizes)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(mode_sizes) + 1:
        raise ShapeError(f"need {len(mode_sizes) + 1} ranks, got {len(ranks)}")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ShapeError("boundary ranks r_0 and r_d must equal 1")
    if min(ranks) < 1 or min(mode_sizes) < 1:
        raise ShapeError("ranks and mode sizes must be positive")
    return mode_sizes, ranks


def _zero_based(tt, indices):
    idx = np.asarray(indices)
    if idx.ndim == 1:
        idx = idx[None, :]
    if idx.ndim != 2 or idx.shape[1] != tt.d:
        raise DomainError(f"expected multi-indices of length {tt.d}, got shape {idx.shape}")
    if idx.size and not np.issubdtype(idx.dtype, np.integer):
        if not np.all(idx == np.round(idx)):
            raise DomainError("multi-indices must be integers")
    idx = idx.astype(np.int64) - 1
    n = np.asarray(tt.mode_sizes)
    bad = (idx < 0) | (idx >= n)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise DomainError(
            f"index {tuple(int(i) + 1 for i in idx[row])} outside mode sizes {tt.mode_sizes}"
        )
    return idx


def tt_eval_batch(tt, indices):
    """Entries at each row of ``indices`` (N x d, 1-based)."""
    idx = _zero_based(tt, indices)
    if idx.shape[0] == 0:
        return np.zeros(0)
    return _kernels.eval_many(*tt.packed(), idx)


def tt_eval(tt, idx):
    """Single entry ``X(i_1, ..., i_d)`` for a 1-based multi-index."""
    return float(tt_eval_batch(tt, np.asarray(idx)[None, :])[0])


def _check_cap(mode_sizes, cap):
    total = math.prod(int(n) for n in mode_sizes)
    if total > cap:
        raise SizeError(f"dense tensor of {total} elements exceeds cap {cap}")


def tt_full(tt, cap=DENSE_CAP):
    """Dense array of shape ``mode_sizes`` (small tensors only)."""
    _check_cap(tt.mode_sizes, cap)
    res = tt.cores[0].reshape(tt.mode_sizes[0], -1)
    for c in tt.cores[1:]:
        r0, n, r1 = c.shape
        res = (res @ c.reshape(r0, n * r1)).reshape(-1, r1)
    return res.reshape(tt.mode_sizes)


def to_linear(x):
    """Flatten a dense tensor with the first index fastest."""
    return np.asarray(x).ravel(order="F")


def from_linear(values, mode_sizes):
    return np.asarray(values, dtype=np.float64).reshape(tuple(mode_sizes), order="F")


def _chop(s, delta):
    """Smallest rank whose discarded singular values have 2-norm <= delta (>= 1)."""
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]  # tail[j] = ||s[j:]||
    keep = np.nonzero(tail > delta)[0]
    return max(1, int(keep[-1]) + 1 if keep.size else 1)


def tt_from_dense(x, tol=1e-12, cap=DENSE_CAP):
    """TT-SVD of a dense array with relative Frobenius accuracy ``tol``."""
    x = np.asarray(x, dtype=np.float64)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    shape = x.shape
    _check_cap(shape, cap)
    d = len(shape)
    if d == 1:
        return TensorTrain((x.reshape(1, shape[0], 1),))
    norm = np.linalg.norm(x)
    if norm == 0:
        return TensorTrain(tuple(np.zeros((1, n, 1)) for n in shape))
    delta = tol * norm / np.sqrt(d - 1)
    cores = []
    r = 1
    c = x.reshape(1, -1)
    for k in range(d - 1):
        c = c.reshape(r * shape[k], -1)
        u, s, vt = np.linalg.svd(c, full_matrices=False)
        q = _chop(s, delta)
        cores.append(u[:, :q].reshape(r, shape[k], q))
        c = s[:q, None] * vt[:q]
        r = q
    cores.append(c.reshape(r, shape[-1], 1))
    return TensorTrain(tuple(cores))


def orthogonalize_right(cores):
    """Right-orthogonalize cores ``d-1 .. 1`` in place (list of arrays)."""
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(-1, n, r1)
        cores[k - 1] = np.einsum("anb,cb->anc", cores[k - 1], rr)
    return cores


def tt_round(tt, tol):
    """Recompress ``tt`` to relative Frobenius accuracy ``tol``; ranks never grow."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    d = tt.d
    if d == 1:
        return tt
    cores = orthogonalize_right([c.copy() for c in tt.cores])
    norm = np.linalg.norm(cores[0])
    if norm == 0:
        return TensorTrain(tuple(np.zeros((1, n, 1)) for n in tt.mode_sizes))
    delta = tol * norm / np.sqrt(d - 1)
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * n, r1), full_matrices=False)
        q = _chop(s, delta)
        cores[k] = u[:, :q].reshape(r0, n, q)
        sv = s[:q, None] * vt[:q]
        cores[k + 1] = np.einsum("ab,bnc->anc", sv, cores[k + 1])
    return TensorTrain(tuple(cores))


def tt_dot(a, b):
    """Frobenius inner product of two TTs with equal mode sizes."""
    if a.mode_sizes != b.mode_sizes:
        raise ShapeError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")
    v = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        t = np.einsum("ab,anc->bnc", v, ca)
        v = np.einsum("bnc,bnd->cd", t, cb)
    return float(v[0, 0])


def tt_norm(tt):
    return float(np.sqrt(max(0.0, tt_dot(tt, tt))))


def tt_scale(tt, alpha):
    """``alpha * tt``, spreading the factor evenly over the cores."""
    alpha = float(alpha)
    if alpha == 0:
        return TensorTrain(tuple(np.zeros_like(c) for c in tt.cores))
    per = abs(alpha) ** (1.0 / tt.d)
    cores = [c * per for c in tt.cores]
    if alpha < 0:
        cores[0] = -cores[0]
    return TensorTrain(tuple(cores))


def tt_random(mode_sizes, ranks, seed=None):
    """Cores filled with i.i.d. standard normal draws; deterministic for a fixed seed."""
    mode_sizes, ranks = check_ranks(mode_sizes, ranks)
    rng = np.random.default_rng(seed)
    return TensorTrain(
        tuple(
            rng.standard_normal((ranks[k], n, ranks[k + 1]))
            for k, n in enumerate(mode_sizes)
        )
    )


def tt_ones(mode_sizes):
    return TensorTrain(tuple(np.ones((1, int(n), 1)) for n in mode_sizes))


def max_ranks(mode_sizes):
    """Largest meaningful rank at each bond: min of left and right grid sizes."""
    d = len(mode_sizes)
    out = [1]
    for k in range(1, d):
        left = math.prod(int(n) for n in mode_sizes[:k])
        right = math.prod(int(n) for n in mode_sizes[k:])
        out.append(min(left, right))
    out.append(1)
    return tuple(out)
