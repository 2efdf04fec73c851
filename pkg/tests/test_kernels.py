import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttgp import _kernels
from ttgp.tt import tt_random


def instance(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    modes = tuple(int(v) for v in rng.integers(1, 6, size=d))
    ranks = (1,) + tuple(int(v) for v in rng.integers(1, 5, size=d - 1)) + (1,)
    tt = tt_random(modes, ranks, seed=seed)
    n_obs = int(rng.integers(1, 40))
    idx = np.stack([rng.integers(0, n, size=n_obs) for n in modes], axis=1)
    return tt.packed(), idx, rng.standard_normal(n_obs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_eval_paths_agree(seed):
    packed, idx, _ = instance(seed)
    want = _kernels.eval_many_np(*packed, idx)
    np.testing.assert_allclose(_kernels._eval_many_py(*packed, idx), want, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(_kernels.eval_many_nb(*packed, idx), want, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_grad_paths_agree(seed):
    packed, idx, w = instance(seed)
    want = _kernels.grad_many_np(*packed, idx, w)
    np.testing.assert_allclose(_kernels._grad_many_py(*packed, idx, w), want, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(_kernels.grad_many_nb(*packed, idx, w), want, rtol=1e-11, atol=1e-11)


def test_pack_round_trip():
    tt = tt_random((2, 3, 4), (1, 2, 3, 1), seed=0)
    cores = _kernels.unpack(*_kernels.pack(tt.cores))
    assert all(np.array_equal(a, b) for a, b in zip(cores, tt.cores))


def test_env_flag_selects_numpy():
    code = (
        "from ttgp import _kernels; from ttgp.tt import tt_random, tt_eval_batch; import numpy as np;"
        "tt = tt_random((3, 3), (1, 2, 1), seed=0);"
        "print(_kernels.USE_NUMBA, repr(float(tt_eval_batch(tt, np.array([[2, 3]]))[0])))"
    )
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, TTGP_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env,
                             check=True)
        out[flag] = res.stdout.split()
    assert out["0"][0] == "False"
    assert out["1"][0] == str(_kernels.HAVE_NUMBA)
    assert float(out["0"][1]) == pytest.approx(float(out["1"][1]), rel=1e-14)
