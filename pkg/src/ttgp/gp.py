"""Gaussian-process regression with stationary kernels.

Hyperparameters are optimized in log space: the lengthscales (one shared
value or one per input dimension), the amplitude ``sigma_f**2`` that
multiplies the unit kernel, and the noise variance.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.spatial.distance import cdist

from .errors import ConditioningError, FitError

FAMILIES = ("exp", "matern32", "matern52", "rbf")
_ALIASES = {
    "exponential": "exp",
    "matern12": "exp",
    "matern_32": "matern32",
    "matern_52": "matern52",
    "se": "rbf",
    "squared_exponential": "rbf",
}
_S3 = np.sqrt(3.0)
_S5 = np.sqrt(5.0)


def canonical_family(name):
    key = str(name).lower().replace("-", "").replace(" ", "")
    key = _ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ValueError(f"unknown kernel family {name!r}; choose from {FAMILIES}")
    return key


def base_kernel(family, r):
    """Unit kernel as a function of the lengthscale-normalized distance."""
    r = np.asarray(r, dtype=np.float64)
    if family == "exp":
        return np.exp(-r)
    if family == "matern32":
        return (1.0 + _S3 * r) * np.exp(-_S3 * r)
    if family == "matern52":
        return (1.0 + _S5 * r + 5.0 / 3.0 * r**2) * np.exp(-_S5 * r)
    if family == "rbf":
        return np.exp(-0.5 * r**2)
    raise ValueError(family)


def _neg_dbase_over_r(family, r):
    """``-base'(r) / r``; finite at 0 except for the exponential kernel."""
    if family == "matern32":
        return 3.0 * np.exp(-_S3 * r)
    if family == "matern52":
        return 5.0 / 3.0 * (1.0 + _S5 * r) * np.exp(-_S5 * r)
    if family == "rbf":
        return np.exp(-0.5 * r**2)
    with np.errstate(divide="ignore"):
        return np.where(r > 0, np.exp(-r) / np.where(r > 0, r, 1.0), 0.0)


@dataclass(frozen=True)
class Kernel:
    family: str
    lengthscales: tuple
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))

    @property
    def ard(self):
        return len(self.lengthscales) > 1

    def _scaled(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x / np.asarray(self.lengthscales)

    def __call__(self, x, y=None):
        """Cross-covariance matrix between the rows of ``x`` and ``y``."""
        xs = self._scaled(x)
        ys = xs if y is None else self._scaled(y)
        r = np.sqrt(cdist(xs, ys, "sqeuclidean"))
        return self.amplitude * base_kernel(self.family, r)


def kernel_eval(k, x, y):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError("points must have equal dimension")
    return float(k(x[None, :], y[None, :])[0, 0])


def gram(k, x, noise=0.0):
    """``K_f + noise * I`` on the rows of ``x``."""
    g = k(x)
    g[np.diag_indices_from(g)] += noise
    return g


def jittered_cholesky(a, start=1e-10, stop=1e-6):
    """Lower Cholesky factor of ``a``, adding diagonal jitter if needed.

    Jitter starts at ``start * trace / N`` and doubles up to ``stop * trace / N``.
    Returns ``(L, jitter)``.
    """
    a = np.asarray(a, dtype=np.float64)
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(a) / a.shape[0]
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = start * scale
    eye = np.eye(a.shape[0])
    while jitter <= stop * scale * (1 + 1e-12):
        try:
            return scipy.linalg.cholesky(a + jitter * eye, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise ConditioningError(f"matrix not positive definite after jitter {stop * scale:.3g}")


def _pack(k, noise):
    return np.log(np.concatenate([k.lengthscales, [k.amplitude, noise]]))


def _unpack(theta, family):
    theta = np.asarray(theta, dtype=np.float64)
    vals = np.exp(theta)
    return Kernel(family, tuple(vals[:-2]), vals[-2]), vals[-1]


def log_marginal_likelihood(k, noise, x, y):
    """Log evidence of centered targets ``y`` and its gradient in log-hyperparameters.

    Gradient order: log lengthscales, log amplitude, log noise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    xs = x / np.asarray(k.lengthscales)
    r = np.sqrt(cdist(xs, xs, "sqeuclidean"))
    base = base_kernel(k.family, r)
    ky = k.amplitude * base
    ky[np.diag_indices_from(ky)] += noise
    chol, _ = jittered_cholesky(ky)
    alpha = scipy.linalg.cho_solve((chol, True), y, check_finite=False)
    value = -0.5 * y @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * np.log(2 * np.pi)

    kinv, info = scipy.linalg.lapack.dpotri(chol, lower=1)
    if info != 0:
        raise ConditioningError(f"inverse from Cholesky factor failed (info={info})")
    kinv = np.tril(kinv) + np.tril(kinv, -1).T
    w = np.outer(alpha, alpha) - kinv
    shape_term = k.amplitude * _neg_dbase_over_r(k.family, r)
    grad = []
    if k.ard:
        for i in range(xs.shape[1]):
            diff2 = (xs[:, i, None] - xs[None, :, i]) ** 2
            grad.append(0.5 * np.sum(w * shape_term * diff2))
    else:
        grad.append(0.5 * np.sum(w * shape_term * r**2))
    grad.append(0.5 * np.sum(w * (k.amplitude * base)))
    grad.append(0.5 * noise * np.trace(w))
    return float(value), np.asarray(grad)


@dataclass
class FitOptions:
    family: str = "rbf"
    ard: bool | None = None  # default: per-dimension lengthscales for RBF only
    n_starts: int = 4
    max_iter: int = 200
    gtol: float = 1e-6
    max_train: int = 4000
    noise_floor: float = 1e-8
    seed: int = 0


@dataclass
class GpModel:
    x: np.ndarray
    y_mean: float
    kernel: Kernel
    noise: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0
    lml: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    @classmethod
    def build(cls, x, y, kernel, noise, y_mean=None):
        """Condition a GP with fixed hyperparameters on ``(x, y)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        y_mean = float(np.mean(y)) if y_mean is None else float(y_mean)
        chol, jitter = jittered_cholesky(gram(kernel, x, noise))
        alpha = scipy.linalg.cho_solve((chol, True), y - y_mean, check_finite=False)
        return cls(x=x, y_mean=y_mean, kernel=kernel, noise=float(noise), chol=chol,
                   alpha=alpha, jitter=jitter)

    def predict_mean(self, xs, chunk=4096):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        out = np.empty(xs.shape[0])
        for s in range(0, xs.shape[0], chunk):
            out[s:s + chunk] = self.y_mean + self.kernel(xs[s:s + chunk], self.x) @ self.alpha
        return out

    def predict_var(self, xs, chunk=4096):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        out = np.empty(xs.shape[0])
        for s in range(0, xs.shape[0], chunk):
            ks = self.kernel(xs[s:s + chunk], self.x)
            v = scipy.linalg.solve_triangular(self.chol, ks.T, lower=True, check_finite=False)
            out[s:s + chunk] = self.kernel.amplitude - np.sum(v**2, axis=0)
        return np.maximum(out, 0.0)

    def summary(self):
        return {
            "family": self.kernel.family,
            "lengthscales": list(self.kernel.lengthscales),
            "amplitude": self.kernel.amplitude,
            "noise": self.noise,
            "y_mean": self.y_mean,
            "jitter": self.jitter,
            "lml": self.lml,
            "n_train": int(self.x.shape[0]),
        }


def predict_mean(model, xs):
    return model.predict_mean(xs)


def predict_var(model, xs):
    return model.predict_var(xs)


def fit(x, y, family=None, opts=None):
    """Fit hyperparameters by multi-start L-BFGS on the log marginal likelihood.

    Starts use lengthscales 0.1, 0.3, 1, 3 times the input span, amplitude
    ``var(y)`` and noise ``1e-4 * var(y)``; the start with the best final
    likelihood wins. More than ``opts.max_train`` points are subsampled.
    """
    opts = FitOptions() if opts is None else opts
    family = canonical_family(family if family is not None else opts.family)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y lengths differ")
    if y.shape[0] < 2:
        raise ValueError("need at least 2 training points")
    if x.shape[0] > opts.max_train:
        rng = np.random.default_rng(opts.seed)
        keep = np.sort(rng.choice(x.shape[0], size=opts.max_train, replace=False))
        x, y = x[keep], y[keep]
    dim = x.shape[1]
    ard = (family == "rbf") if opts.ard is None else opts.ard
    n_ls = dim if ard else 1
    y_mean = float(np.mean(y))
    yc = y - y_mean
    var = float(np.mean(yc**2))
    if var == 0.0:
        model = GpModel.build(x, y, Kernel(family, (1.0,) * n_ls, 0.0), 1.0, y_mean)
        model.lml = float("nan")
        return model

    span = np.ptp(x, axis=0)
    span = float(np.max(span)) if np.max(span) > 0 else 1.0
    bounds = (
        [(np.log(1e-3 * span), np.log(1e3 * span))] * n_ls
        + [(np.log(1e-6 * var), np.log(1e6 * var))]
        + [(np.log(opts.noise_floor * var), np.log(var))]
    )

    last = {}

    def objective(theta):
        k, noise = _unpack(theta, family)
        try:
            val, grad = log_marginal_likelihood(k, noise, x, yc)
        except ConditioningError:
            val, grad = -1e300, np.zeros_like(theta)
        last[theta.tobytes()] = val
        return -val, -grad

    best = None
    starts = (0.1, 0.3, 1.0, 3.0, 0.03, 10.0)
    for s in range(opts.n_starts):
        ls = starts[s % len(starts)] * span
        theta0 = np.log([ls] * n_ls + [var, max(1e-4 * var, opts.noise_floor * var)])
        history = []
        last.clear()

        def record(xk, h=history):
            v = last.get(xk.tobytes())
            h.append(v if v is not None else -objective(xk)[0])

        res = scipy.optimize.minimize(
            objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds, callback=record,
            options={"maxiter": opts.max_iter, "gtol": opts.gtol},
        )
        if not np.isfinite(res.fun) or res.fun >= 1e299:
            continue
        if best is None or -res.fun > best[0]:
            best = (-res.fun, res.x, history)
    if best is None:
        raise FitError("every optimizer start failed to produce a positive-definite kernel")
    k, noise = _unpack(best[1], family)
    model = GpModel.build(x, y, k, noise, y_mean)
    model.lml = float(best[0])
    model.history = best[2]
    return model


def model_to_json(model):
    doc = {
        "format_tag": "GPv1",
        "family": model.kernel.family,
        "lengthscales": list(model.kernel.lengthscales),
        "amplitude": model.kernel.amplitude,
        "noise": model.noise,
        "jitter": model.jitter,
        "y_mean": model.y_mean,
        "lml": model.lml,
        "x": model.x.tolist(),
        "alpha": model.alpha.tolist(),
    }
    return json.dumps(doc)


def model_from_json(text):
    doc = json.loads(text)
    if doc.get("format_tag") != "GPv1":
        raise ValueError(f"not a GP model file (format_tag={doc.get('format_tag')!r})")
    k = Kernel(doc["family"], tuple(doc["lengthscales"]), doc["amplitude"])
    x = np.asarray(doc["x"], dtype=np.float64)
    a = gram(k, x, doc["noise"])
    a[np.diag_indices_from(a)] += doc["jitter"]
    chol = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    return GpModel(x=x, y_mean=float(doc["y_mean"]), kernel=k, noise=float(doc["noise"]),
                   chol=chol, alpha=np.asarray(doc["alpha"], dtype=np.float64),
                   jitter=float(doc["jitter"]), lml=float(doc["lml"]))


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path) as fh:
        return model_from_json(fh.read())
