"""Hot inner loops over batches of multi-indices.

Each kernel has a numba-compiled version and a pure-numpy version with
identical signatures. The numba path is used when numba imports and the
environment variable ``TTGP_NUMBA`` is not ``0``. Cores are passed packed:
``flat`` holds every core in C order, core ``k`` occupying
``flat[ps[k]:ps[k+1]]`` with shape ``(ranks[k], modes[k], ranks[k+1])``.
Indices here are 0-based.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("TTGP_NUMBA", "1") != "0"


def pack(cores):
    """Return ``(flat, ps, ranks, modes)`` for a list of 3-way cores."""
    ranks = np.array([c.shape[0] for c in cores] + [cores[-1].shape[2]], dtype=np.int64)
    modes = np.array([c.shape[1] for c in cores], dtype=np.int64)
    sizes = np.array([c.size for c in cores], dtype=np.int64)
    ps = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    flat = np.concatenate([np.ascontiguousarray(c, dtype=np.float64).ravel() for c in cores])
    return flat, ps, ranks, modes


def unpack(flat, ps, ranks, modes):
    return [
        flat[ps[k]:ps[k + 1]].reshape(ranks[k], modes[k], ranks[k + 1])
        for k in range(len(modes))
    ]


# ---------------------------------------------------------------- numpy path


def eval_many_np(flat, ps, ranks, modes, idx):
    cores = unpack(flat, ps, ranks, modes)
    v = cores[0][0, idx[:, 0], :]
    for k in range(1, len(cores)):
        v = np.einsum("na,anb->nb", v, cores[k][:, idx[:, k], :])
    return v[:, 0].copy()


def grad_many_np(flat, ps, ranks, modes, idx, weights):
    cores = unpack(flat, ps, ranks, modes)
    d = len(cores)
    n_obs = idx.shape[0]
    lefts = [np.ones((n_obs, 1))]
    for k in range(d - 1):
        lefts.append(np.einsum("na,anb->nb", lefts[-1], cores[k][:, idx[:, k], :]))
    rights = [None] * d
    rights[d - 1] = np.ones((n_obs, 1))
    for k in range(d - 1, 0, -1):
        rights[k - 1] = np.einsum("anb,nb->na", cores[k][:, idx[:, k], :], rights[k])
    out = np.zeros_like(flat)
    for k in range(d):
        r0, n, r1 = ranks[k], modes[k], ranks[k + 1]
        contrib = (weights[:, None, None] * lefts[k][:, :, None] * rights[k][:, None, :])
        g = np.zeros((n, r0 * r1))
        np.add.at(g, idx[:, k], contrib.reshape(n_obs, r0 * r1))
        out[ps[k]:ps[k + 1]] = g.reshape(n, r0, r1).transpose(1, 0, 2).ravel()
    return out


# ---------------------------------------------------------------- numba path


def _eval_many_py(flat, ps, ranks, modes, idx):
    n_obs, d = idx.shape
    rmax = ranks.max()
    out = np.empty(n_obs)
    v = np.empty(rmax)
    w = np.empty(rmax)
    for t in range(n_obs):
        v[0] = 1.0
        for k in range(d):
            r0 = ranks[k]
            n = modes[k]
            r1 = ranks[k + 1]
            base = ps[k] + idx[t, k] * r1
            for b in range(r1):
                s = 0.0
                for a in range(r0):
                    s += v[a] * flat[base + a * n * r1 + b]
                w[b] = s
            for b in range(r1):
                v[b] = w[b]
        out[t] = v[0]
    return out


def _grad_many_py(flat, ps, ranks, modes, idx, weights):
    n_obs, d = idx.shape
    rmax = ranks.max()
    out = np.zeros(flat.shape[0])
    left = np.zeros((d + 1, rmax))
    right = np.zeros((d + 1, rmax))
    for t in range(n_obs):
        wt = weights[t]
        if wt == 0.0:
            continue
        left[0, 0] = 1.0
        for k in range(d):
            r0 = ranks[k]
            n = modes[k]
            r1 = ranks[k + 1]
            base = ps[k] + idx[t, k] * r1
            for b in range(r1):
                s = 0.0
                for a in range(r0):
                    s += left[k, a] * flat[base + a * n * r1 + b]
                left[k + 1, b] = s
        right[d, 0] = 1.0
        for k in range(d - 1, -1, -1):
            r0 = ranks[k]
            n = modes[k]
            r1 = ranks[k + 1]
            base = ps[k] + idx[t, k] * r1
            for a in range(r0):
                s = 0.0
                for b in range(r1):
                    s += flat[base + a * n * r1 + b] * right[k + 1, b]
                right[k, a] = s
        for k in range(d):
            r0 = ranks[k]
            n = modes[k]
            r1 = ranks[k + 1]
            base = ps[k] + idx[t, k] * r1
            for a in range(r0):
                la = wt * left[k, a]
                for b in range(r1):
                    out[base + a * n * r1 + b] += la * right[k + 1, b]
    return out


if HAVE_NUMBA:
    eval_many_nb = numba.njit(cache=True)(_eval_many_py)
    grad_many_nb = numba.njit(cache=True)(_grad_many_py)
else:  # pragma: no cover
    eval_many_nb = _eval_many_py
    grad_many_nb = _grad_many_py


def eval_many(flat, ps, ranks, modes, idx):
    """Entries of the packed TT at the rows of ``idx`` (N x d, 0-based)."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if USE_NUMBA:
        return eval_many_nb(flat, ps, ranks, modes, idx)
    return eval_many_np(flat, ps, ranks, modes, idx)


def grad_many(flat, ps, ranks, modes, idx, weights):
    """Packed gradient of ``sum_t weights[t] * X[idx[t]]`` with respect to the cores.

    With ``weights = 2 * residual`` this is the gradient of the squared error.
    """
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if USE_NUMBA:
        return grad_many_nb(flat, ps, ranks, modes, idx, weights)
    return grad_many_np(flat, ps, ranks, modes, idx, weights)
