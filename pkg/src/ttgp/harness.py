"""Synthetic GP-prior problems and the random-vs-GP initialization experiment."""

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .completion import CompletionOptions, complete, objective
from .gp import canonical_family
from .gpinit import InitOptions, gp_tt_init, random_init
from .observations import ObservationSet, load_observations, rescale_indices
from .tt import tt_eval_batch

_MATERN_NU = {"exp": 0.5, "matern32": 1.5, "matern52": 2.5}


@dataclass(frozen=True, eq=False)
class SyntheticFunction:
    """Random-feature sample ``f(x) = sqrt(2/m) * sum_j w_j cos(omega_j . x + b_j)``."""

    family: str
    lengthscale: float
    d: int
    m: int
    omega: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    seed: int

    def __call__(self, x, chunk=8192):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(x.shape[0])
        scale = math.sqrt(2.0 / self.m)
        for s in range(0, x.shape[0], chunk):
            proj = x[s:s + chunk] @ self.omega.T + self.phases
            out[s:s + chunk] = scale * (np.cos(proj) @ self.weights)
        return out


def sample_gp_function(family, lengthscale, d, m=2048, seed=0):
    """Draw an (approximate) sample path of a zero-mean unit-variance stationary GP.

    Frequencies come from the kernel's spectral density: Gaussian for RBF,
    multivariate Student-t with ``2 nu`` degrees of freedom for the Matern
    family (exponential is ``nu = 1/2``).
    """
    family = canonical_family(family)
    if m < 1 or lengthscale <= 0:
        raise ValueError("need m >= 1 and lengthscale > 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, d))
    if family == "rbf":
        omega = z / lengthscale
    else:
        nu = _MATERN_NU[family]
        u = rng.chisquare(2 * nu, size=(m, 1))
        omega = z * np.sqrt(2 * nu / u) / lengthscale
    phases = rng.uniform(0.0, 2 * np.pi, size=m)
    weights = rng.standard_normal(m)
    return SyntheticFunction(family, float(lengthscale), int(d), int(m), omega, phases, weights,
                             seed)


def sample_omega(mode_sizes, n_train, n_test, seed=0):
    """Disjoint uniform samples (without replacement) of 1-based grid indices."""
    mode_sizes = tuple(int(n) for n in mode_sizes)
    total = math.prod(mode_sizes)
    want = n_train + n_test
    if n_train < 0 or n_test < 0 or want > total:
        raise ValueError(f"cannot draw {n_train} + {n_test} distinct indices from {total}")
    rng = np.random.default_rng(seed)
    if total < 2**62:
        flat = rng.choice(total, size=want, replace=False)
        idx = np.stack(np.unravel_index(flat, mode_sizes, order="F"), axis=1) + 1
    else:
        seen = {}
        while len(seen) < want:
            row = tuple(int(rng.integers(n)) + 1 for n in mode_sizes)
            seen.setdefault(row, None)
        idx = np.array(list(seen), dtype=np.int64)
    idx = idx.astype(np.int64).reshape(want, len(mode_sizes))
    return idx[:n_train], idx[n_train:]


def mse(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("mse needs equal-length non-empty inputs")
    return float(np.mean((pred - true) ** 2))


def mse_rel(pred, true):
    """MSE divided by the (biased) variance of ``true``: the unexplained-variance ratio."""
    sigma = float(np.std(np.asarray(true, dtype=np.float64)))
    if sigma == 0:
        raise ValueError("mse_rel undefined: test values have zero variance")
    return mse(pred, true) / sigma**2


@dataclass
class ExperimentConfig:
    kernel: str = "rbf"
    lengthscale: float = 1.0
    d: int = 4
    n: int = 10
    N: int = 1000
    N_test: int = 1000
    rff_features: int = 2048
    seed: int = 0
    method: str = "als"
    n_iters: int = 50
    tol: float = 1e-6
    als_ridge: float | None = None
    sgd_lr: float | None = None
    sgd_batch: int = 64
    random_ranks: list | None = None  # default 1 .. min(n)
    gp_family: str = "rbf"
    gp_starts: int = 2
    gp_max_train: int = 1000
    r0: int = 2
    r_max: int = 64
    round_tol: float = 1e-6
    obs_path: str | None = None

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def mode_sizes(self):
        return (int(self.n),) * int(self.d)

    def completion_options(self):
        return CompletionOptions(
            method=self.method, n_iters=self.n_iters, als_ridge=self.als_ridge,
            sgd_lr=self.sgd_lr, sgd_batch=self.sgd_batch, seed=self.seed, tol=self.tol,
            trace_every=max(1, self.n_iters),
        )

    def init_options(self):
        return InitOptions(
            family=self.gp_family, n_starts=self.gp_starts, max_train=self.gp_max_train,
            r0=self.r0, r_max=self.r_max, round_tol=self.round_tol, seed=self.seed,
        )

    def resolved_sizes(self):
        """``(N, N_test)`` after fitting both into the grid.

        When the grid is too small, the test set shrinks first (down to 10%
        of the grid) and then the training set.
        """
        total = math.prod(self.mode_sizes())
        n_train, n_test = int(self.N), int(self.N_test)
        if n_train + n_test <= total:
            return n_train, n_test
        n_test = max(min(n_test, total - n_train), max(1, total // 10))
        n_test = min(n_test, total - 1)
        return min(n_train, total - n_test), n_test


@dataclass
class ArmResult:
    arm: str
    rank: str = ""
    init_train_mse: float = float("nan")
    train_mse: float = float("nan")
    test_mse: float = float("nan")
    test_mse_rel: float = float("nan")
    iters: int = 0
    evals: int = 0
    seconds: float = 0.0
    error: str = ""


@dataclass
class ExperimentReport:
    config: dict
    arms: dict = field(default_factory=dict)
    improvement_raw: float = float("nan")
    improvement: float = float("nan")
    candidates: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _run_gp_arm(obs, test_idx, test_y, cfg):
    t0 = time.perf_counter()
    res = ArmResult("gp")
    try:
        init = gp_tt_init(obs, cfg.init_options())
        res.init_train_mse = init.train_error
        res.evals = init.cross.evals
        res.rank = "-".join(str(r) for r in init.tt0.ranks)
        trace = complete(init.tt0, obs, cfg.completion_options())
        _finish(res, trace, obs, test_idx, test_y)
    except Exception as exc:  # recorded per arm; the report stays partial
        res.error = f"{type(exc).__name__}: {exc}"
    res.seconds = time.perf_counter() - t0
    return res


def _finish(res, trace, obs, test_idx, test_y):
    res.iters = trace.iters[-1]
    res.train_mse = objective(trace.tt, obs) / len(obs)
    pred = tt_eval_batch(trace.tt, test_idx)
    res.test_mse = mse(pred, test_y)
    # constant test values leave MSE_rel undefined; keep it NaN and rank by MSE instead
    res.test_mse_rel = mse_rel(pred, test_y) if np.std(test_y) > 0 else float("nan")


def _run_random_arm(obs, test_idx, test_y, cfg):
    ranks = cfg.random_ranks or list(range(1, min(obs.mode_sizes) + 1))
    candidates = []
    for r in ranks:
        t0 = time.perf_counter()
        res = ArmResult("random", rank=str(r))
        try:
            tt0 = random_init(obs, int(r), seed=cfg.seed)
            res.init_train_mse = objective(tt0, obs) / len(obs)
            trace = complete(tt0, obs, cfg.completion_options())
            _finish(res, trace, obs, test_idx, test_y)
        except Exception as exc:
            res.error = f"{type(exc).__name__}: {exc}"
        res.seconds = time.perf_counter() - t0
        candidates.append(res)
    ok = [c for c in candidates if not c.error and np.isfinite(c.test_mse)]
    if ok:
        best = min(ok, key=lambda c: (c.test_mse_rel, c.test_mse)
                   if np.isfinite(c.test_mse_rel) else (np.inf, c.test_mse))
    else:
        best = ArmResult("random", error="; ".join(c.error for c in candidates) or "no ranks")
    best = ArmResult(**{**asdict(best), "seconds": sum(c.seconds for c in candidates)})
    return best, candidates


def make_problem(cfg):
    """Observed and held-out entries for a config: ``(obs, test_idx, test_y)``."""
    if cfg.obs_path:
        full = load_observations(cfg.obs_path)
        rng = np.random.default_rng(cfg.seed)
        perm = rng.permutation(len(full))
        n_test = min(int(cfg.N_test), len(full) - 2)
        test_rows, train_rows = perm[:n_test], perm[n_test:]
        test = full.subset(np.sort(test_rows))
        return full.subset(np.sort(train_rows)), test.indices, test.values
    modes = cfg.mode_sizes()
    f = sample_gp_function(cfg.kernel, cfg.lengthscale, cfg.d, cfg.rff_features, cfg.seed)
    n_train, n_test = cfg.resolved_sizes()
    train_idx, test_idx = sample_omega(modes, n_train, n_test, seed=[cfg.seed, 1])
    obs = ObservationSet(modes, train_idx, f(rescale_indices(train_idx, modes)))
    return obs, test_idx, f(rescale_indices(test_idx, modes))


def run_experiment(cfg):
    """Run both arms on one problem with identical optimizer settings."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    cfg.kernel = canonical_family(cfg.kernel)
    report = ExperimentReport(config=asdict(cfg))
    n_train, n_test = cfg.resolved_sizes()
    report.config["N_resolved"], report.config["N_test_resolved"] = n_train, n_test
    try:
        obs, test_idx, test_y = make_problem(cfg)
    except Exception as exc:
        report.arms["gp"] = ArmResult("gp", error=f"{type(exc).__name__}: {exc}")
        report.arms["random"] = ArmResult("random", error=f"{type(exc).__name__}: {exc}")
        return report
    report.arms["gp"] = _run_gp_arm(obs, test_idx, test_y, cfg)
    report.arms["random"], report.candidates = _run_random_arm(obs, test_idx, test_y, cfg)
    raw = report.arms["random"].test_mse_rel - report.arms["gp"].test_mse_rel
    report.improvement_raw = float(raw)
    report.improvement = clamp_improvement(raw)
    return report


def clamp_improvement(raw):
    if not np.isfinite(raw):
        return float("nan")
    return float(min(1.0, max(-1.0, raw)))


SWEEP_KEYS = ("kernel", "lengthscale", "d", "n", "N", "seed", "method")


def expand_grid(doc):
    """Expand list-valued sweep keys of a config document into one config per cell."""
    doc = dict(doc)
    if "seeds" in doc:
        doc["seed"] = doc.pop("seeds")
    axes = [(k, doc[k]) for k in SWEEP_KEYS if isinstance(doc.get(k), list)]
    base = {k: v for k, v in doc.items() if k not in dict(axes)}
    cells = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        cell = dict(base)
        cell.update(zip((k for k, _ in axes), combo))
        cells.append(ExperimentConfig.from_dict(cell))
    return cells


def run_sweep(doc, jobs=1, progress=None):
    cells = expand_grid(doc)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run_experiment, cells))
    else:
        reports = []
        for cfg in cells:
            reports.append(run_experiment(cfg))
            if progress is not None:
                progress(reports[-1])
    return reports


CSV_FIELDS = (
    "kernel", "d", "n", "N", "seed", "optimizer", "arm", "rank", "init_train_mse", "train_mse",
    "test_mse", "test_mse_rel", "iters", "evals", "seconds", "error", "improvement_raw",
    "improvement",
)


def reports_to_csv(reports, timing=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        c = rep.config
        for arm in ("random", "gp"):
            a = rep.arms.get(arm)
            if a is None:
                continue
            w.writerow([
                c["kernel"], c["d"], c["n"], c.get("N_resolved", c["N"]), c["seed"], c["method"],
                arm, a.rank, repr(a.init_train_mse), repr(a.train_mse), repr(a.test_mse),
                repr(a.test_mse_rel), a.iters, a.evals,
                f"{a.seconds:.3f}" if timing else "", a.error,
                repr(rep.improvement_raw), repr(rep.improvement),
            ])
    return buf.getvalue()


def load_config(path):
    with open(path) as fh:
        return json.load(fh)
