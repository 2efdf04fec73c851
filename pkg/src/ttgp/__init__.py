"""Tensor-train completion initialized by Gaussian-process regression and TT-cross."""

__version__ = "0.1.0"

from .completion import (
    CompletionOptions,
    CompletionTrace,
    als_half_sweep,
    als_sweep,
    complete,
    grad_cores,
    objective,
)
from .cross import BlackBox, CrossReport, tt_cross, tt_cross_adaptive
from .gp import FitOptions, GpModel, Kernel, fit, gram, kernel_eval, log_marginal_likelihood
from .gpinit import InitOptions, InitReport, gp_tt_init, random_init
from .maxvol import MaxvolResult, maxvol, rank_reveal_columns
from .observations import ObservationSet, load_observations, rescale_index, save_observations
from .serialize import load_tt, save_tt, tt_deserialize, tt_serialize
from .tt import (
    TensorTrain,
    tt_dot,
    tt_eval,
    tt_eval_batch,
    tt_from_dense,
    tt_full,
    tt_norm,
    tt_random,
    tt_round,
)
