"""Initial TT for completion: GP regression on the observed entries, compressed by TT-cross."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gp as gpmod
from .completion import objective
from .cross import BlackBox, CrossReport, tt_cross_adaptive
from .errors import StageError
from .observations import rescale_indices
from .tt import max_ranks, tt_norm, tt_random, tt_scale


@dataclass
class InitOptions:
    family: str = "rbf"
    ard: bool | None = None
    n_starts: int = 4
    max_iter: int = 200
    max_train: int = 4000
    noise_floor: float = 1e-8
    r0: int = 2
    r_max: int = 64
    round_tol: float = 1e-6
    growth: float = 2.0
    sweeps: int = 2
    seed: int = 0

    def fit_options(self):
        return gpmod.FitOptions(
            family=self.family, ard=self.ard, n_starts=self.n_starts, max_iter=self.max_iter,
            max_train=self.max_train, noise_floor=self.noise_floor, seed=self.seed,
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class InitReport:
    tt0: object
    gp: gpmod.GpModel = field(repr=False)
    gp_summary: dict
    cross: CrossReport = field(repr=False)
    train_error: float


def gp_blackbox(model, mode_sizes):
    """Black box mapping 1-based grid indices to the GP posterior mean."""
    return BlackBox(lambda idx: model.predict_mean(rescale_indices(idx, mode_sizes)))


def gp_tt_init(obs, opts=None):
    """Fit a GP to ``obs`` and TT-cross its posterior mean over the whole grid."""
    opts = InitOptions() if opts is None else opts
    if len(obs) < 2:
        raise ValueError("GP initialization needs at least 2 observations")
    x = rescale_indices(obs.indices, obs.mode_sizes)
    try:
        model = gpmod.fit(x, obs.values, opts.family, opts.fit_options())
    except Exception as exc:
        raise StageError("gp-fit", exc) from exc
    try:
        rep = tt_cross_adaptive(
            gp_blackbox(model, obs.mode_sizes), obs.mode_sizes, r0=opts.r0, r_max=opts.r_max,
            round_tol=opts.round_tol, growth=opts.growth, sweeps=opts.sweeps, seed=opts.seed,
        )
    except Exception as exc:
        raise StageError("tt-cross", exc) from exc
    tt0 = rep.tt
    return InitReport(
        tt0=tt0,
        gp=model,
        gp_summary=model.summary(),
        cross=rep,
        train_error=objective(tt0, obs) / len(obs),
    )


def uniform_ranks(mode_sizes, rank):
    cap = max_ranks(mode_sizes)
    return tuple([1] + [min(int(rank), c) for c in cap[1:-1]] + [1])


def random_init(obs, ranks, seed=0):
    """Gaussian random TT rescaled so its mean squared entry matches that of ``obs``.

    ``ranks`` is a full rank vector or a single integer (capped per bond).
    The target norm is ``||y|| * sqrt(prod(n) / N)``.
    """
    if np.isscalar(ranks):
        ranks = uniform_ranks(obs.mode_sizes, ranks)
    tt = tt_random(obs.mode_sizes, ranks, seed)
    target = float(np.linalg.norm(obs.values)) * math.sqrt(obs.grid_size / len(obs))
    norm = tt_norm(tt)
    if norm == 0:
        return tt
    # scale in two steps so huge grids do not overflow a single factor
    tt = tt_scale(tt, 1.0 / norm)
    return tt_scale(tt, target)
