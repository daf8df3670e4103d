"""Gaussian process regression with Matérn kernels.

One independent scalar GP per output column, all sharing the same inputs.
Outputs are standardized per column before fitting. Hyperparameters are
stored and optimized in log space.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dpotrf, dpotrs
from scipy.optimize import minimize

from .errors import NotPositiveDefinite, OptimizerStall
from .linalg import jittered_cholesky, solve_triangular_extended

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2 * math.pi)

DEFAULT_NOISE_VARIANCE = 1e-12
# log-space bounds
LOG_SIGNAL_BOUNDS = (-10.0, 10.0)
LOG_LENGTH_BOUNDS = (-6.0, 6.0)
LOG_NOISE_BOUNDS = (-30.0, 0.0)


@dataclass(frozen=True)
class Hyperparameters:
    signal_variance: float = 1.0
    length_scales: tuple = (1.0, 1.0)
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    nu: float = 2.5

    def __post_init__(self):
        if self.signal_variance <= 0 or any(l <= 0 for l in self.length_scales):
            raise ValueError("signal variance and length scales must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.nu not in (0.5, 1.5, 2.5, math.inf):
            raise ValueError(f"unsupported smoothness nu={self.nu}")

    def to_log(self, with_noise=False):
        theta = [math.log(self.signal_variance), *map(math.log, self.length_scales)]
        if with_noise:
            theta.append(math.log(max(self.noise_variance, 1e-300)))
        return np.array(theta)

    def from_log(self, theta, with_noise=False):
        d = len(self.length_scales)
        kw = dict(signal_variance=math.exp(theta[0]),
                  length_scales=tuple(math.exp(t) for t in theta[1:1 + d]))
        if with_noise:
            kw["noise_variance"] = math.exp(theta[1 + d])
        return replace(self, **kw)

    def to_dict(self):
        return {"signal_variance": self.signal_variance, "length_scales": list(self.length_scales),
                "noise_variance": self.noise_variance, "nu": "inf" if self.nu == math.inf else self.nu}

    @classmethod
    def from_dict(cls, d):
        nu = math.inf if d.get("nu") == "inf" else float(d.get("nu", 2.5))
        return cls(float(d["signal_variance"]), tuple(map(float, d["length_scales"])),
                   float(d["noise_variance"]), nu)


def _matern_shape(r, nu):
    if nu == 2.5:
        return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)
    if nu == 1.5:
        return (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    if nu == 0.5:
        return np.exp(-r)
    return np.exp(-0.5 * r * r)


def scaled_distance(X1, X2, length_scales, dtype=float):
    """Pairwise ``|(x_p - x_q) / l|`` for rows of ``X1`` and ``X2``."""
    ls = np.asarray(length_scales, dtype=dtype)
    X1 = np.atleast_2d(X1).astype(dtype) / ls
    X2 = np.atleast_2d(X2).astype(dtype) / ls
    diff = X1[:, None, :] - X2[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def kernel_matrix(X1, X2, h, dtype=float):
    """Noise-free covariance ``K(X1, X2)``."""
    r = scaled_distance(X1, X2, h.length_scales, dtype)
    return dtype(h.signal_variance) * _matern_shape(r, h.nu)


def matern_kernel(xp, xq, h, same_point=None):
    """Kernel value between two inputs, including the noise term for the same point.

    ``same_point`` defaults to coordinate equality.
    """
    xp = np.asarray(xp, dtype=float)
    xq = np.asarray(xq, dtype=float)
    r = float(np.linalg.norm((xp - xq) / np.asarray(h.length_scales)))
    k = h.signal_variance * float(_matern_shape(r, h.nu))
    if same_point is None:
        same_point = bool(np.array_equal(xp, xq))
    return k + (h.noise_variance if same_point else 0.0)


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


@dataclass
class _Target:
    hyper: Hyperparameters
    shift: float
    scale: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    jitter: float = 0.0


class GprModel:
    """Fitted GP surrogate; use :func:`fit` to construct."""

    def __init__(self, X, Y, targets, standardize=True):
        self.X = X
        self.Y = Y
        self.targets = targets
        self.standardize = standardize

    @property
    def n_targets(self):
        return len(self.targets)

    @property
    def hypers(self):
        return [t.hyper for t in self.targets]

    def _kstar(self, Xs, j):
        return kernel_matrix(Xs, self.X, self.targets[j].hyper)

    def predict_mean(self, Xs, target=None):
        """Posterior means at rows of ``Xs``; shape ``(m, n_targets)`` or ``(m,)``.

        ``k*^T alpha`` is summed in extended precision: with long length
        scales the kernel entries are much larger than the result and a
        float64 sum leaves rounding noise that defeats root finding.
        """
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        js = range(self.n_targets) if target is None else [target]
        cols = []
        for j in js:
            t = self.targets[j]
            k = kernel_matrix(Xs, self.X, t.hyper, dtype=np.longdouble)
            cols.append((k @ t.alpha).astype(float) * t.scale + t.shift)
        out = np.stack(cols, axis=1)
        return out[:, 0] if target is not None else out

    def predict_var(self, Xs, target=None):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        js = range(self.n_targets) if target is None else [target]
        cols = []
        for j in js:
            t = self.targets[j]
            v = scipy.linalg.solve_triangular(t.chol, self._kstar(Xs, j).T, lower=True, check_finite=False)
            var = t.hyper.signal_variance - np.einsum("ij,ij->j", v, v)
            floor = -1e-12 * t.hyper.signal_variance
            if np.any(var < floor):
                warnings.warn(f"negative posterior variance {var.min():.3e} clamped to 0", RuntimeWarning)
            cols.append(np.maximum(var, 0.0) * t.scale ** 2)
        out = np.stack(cols, axis=1)
        return out[:, 0] if target is not None else out

    def predict(self, x):
        """One :class:`Prediction` per target at a single input."""
        mean = self.predict_mean(x)[0]
        var = self.predict_var(x)[0]
        return [Prediction(float(m), float(v)) for m, v in zip(mean, var)]

    def covariance_matrix(self, target=0, dtype=float):
        """``K(X, X) + noise * I`` exactly as factorized during fitting (jitter excluded)."""
        h = self.targets[target].hyper
        K = kernel_matrix(self.X, self.X, h, dtype=dtype)
        K[np.diag_indices_from(K)] += dtype(h.noise_variance)
        return K

    def log_marginal_likelihood(self, target=0):
        t = self.targets[target]
        y = (self.Y[:, target] - t.shift) / t.scale
        n = len(y)
        return float(-0.5 * t.beta @ t.beta - np.sum(np.log(np.diag(t.chol))) - 0.5 * n * LOG_2PI)

    def to_dict(self):
        return {
            "X": self.X.tolist(),
            "y": self.Y.tolist(),
            "standardize": self.standardize,
            "targets": [{"hyper": t.hyper.to_dict(), "shift": t.shift, "scale": t.scale} for t in self.targets],
        }

    @classmethod
    def from_dict(cls, d):
        X = np.asarray(d["X"], dtype=float)
        Y = np.asarray(d["y"], dtype=float).reshape(len(X), -1)
        targets = []
        for j, td in enumerate(d["targets"]):
            h = Hyperparameters.from_dict(td["hyper"])
            targets.append(_factorize(X, (Y[:, j] - td["shift"]) / td["scale"], h, td["shift"], td["scale"]))
        return cls(X, Y, targets, d.get("standardize", True))


def _factorize(X, y, h, shift, scale, refine=2):
    """Cholesky factor and weights ``alpha = K^-1 y`` in extended precision.

    With long length scales ``K`` is so ill-conditioned that a float64
    factorization needs jitter far above the noise variance, which caps the
    attainable accuracy of the surrogate near its root.
    """
    K = kernel_matrix(X, X, h, dtype=np.longdouble)
    K[np.diag_indices_from(K)] += np.longdouble(h.noise_variance)
    L, jitter = jittered_cholesky(K, extended=True)
    if jitter:
        K[np.diag_indices_from(K)] += np.longdouble(jitter)
    y_ext = np.asarray(y, dtype=np.longdouble)
    beta = solve_triangular_extended(L, y_ext)
    alpha = solve_triangular_extended(L, beta, trans=True)
    for _ in range(refine):
        r = y_ext - K @ alpha
        alpha = alpha + solve_triangular_extended(L, solve_triangular_extended(L, r), trans=True)
    return _Target(h, shift, scale, L.astype(float), alpha, beta.astype(float), jitter)


class _NegLML:
    """Negative LML as a function of log hyperparameters, with cached distances."""

    def __init__(self, X, y, h0, with_noise):
        self.sq = (X[:, None, :] - X[None, :, :]) ** 2
        self.y = y
        self.h0 = h0
        self.with_noise = with_noise
        self.n = len(y)
        self.diag = np.diag_indices(self.n)
        self.const = 0.5 * self.n * LOG_2PI

    def __call__(self, theta):
        d = self.sq.shape[-1]
        sf2 = math.exp(theta[0])
        inv_l2 = np.exp(-2.0 * np.asarray(theta[1:1 + d]))
        noise = math.exp(theta[1 + d]) if self.with_noise else self.h0.noise_variance
        r = np.sqrt(self.sq @ inv_l2)
        K = sf2 * _matern_shape(r, self.h0.nu)
        K[self.diag] += noise
        L, info = dpotrf(K, lower=1, clean=0)
        if info != 0:
            try:
                L, _ = jittered_cholesky(K)
            except NotPositiveDefinite:
                return 1e25
        alpha, _ = dpotrs(L, self.y, lower=1)
        val = 0.5 * self.y @ alpha + np.log(L[self.diag]).sum() + self.const
        return float(val) if np.isfinite(val) else 1e25


def _bounds(d, with_noise, signal_bounds=LOG_SIGNAL_BOUNDS, length_bounds=LOG_LENGTH_BOUNDS):
    b = [tuple(signal_bounds)] + [tuple(length_bounds)] * d
    if with_noise:
        b.append(LOG_NOISE_BOUNDS)
    return b


def _optimize(X, y, h0, with_noise, n_starts, maxfev, rng, bounds=None):
    obj = _NegLML(X, y, h0, with_noise)
    bounds = bounds or _bounds(X.shape[1], with_noise)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    theta0 = np.clip(h0.to_log(with_noise), lo, hi)
    starts = [theta0] + [np.clip(theta0 + rng.uniform(-2.0, 2.0, size=theta0.size), lo, hi)
                         for _ in range(n_starts - 1)]
    best_theta, best_val = theta0, obj(theta0)
    any_ok = False
    for start in starts:
        res = minimize(obj, start, method="Nelder-Mead", bounds=bounds,
                       options={"maxfev": maxfev, "xatol": 1e-4, "fatol": 1e-6})
        any_ok |= bool(res.success)
        if res.fun < best_val:
            best_theta, best_val = res.x, float(res.fun)
    if not any_ok:
        warnings.warn("hyperparameter optimization hit the evaluation cap at every start", OptimizerStall)
    return h0.from_log(best_theta, with_noise)


def default_hyperparameters(X, noise_variance=DEFAULT_NOISE_VARIANCE, nu=2.5):
    span = np.ptp(np.atleast_2d(X), axis=0)
    return Hyperparameters(1.0, tuple(float(s) if s > 0 else 1.0 for s in span), noise_variance, nu)


def fit(X, y, h0=None, optimize=True, optimize_noise=False, n_starts=5, maxfev=500,
        seed=0, standardize=True, signal_bounds=LOG_SIGNAL_BOUNDS, length_bounds=LOG_LENGTH_BOUNDS):
    """Fit one GP per column of ``y``.

    Parameters
    ----------
    X : array, shape (n, d)
    y : array, shape (n,) or (n, t)
    h0 : Hyperparameters or list of them (one per target), optional
        Starting point of the optimization, or the fixed values when
        ``optimize`` is false.
    optimize : bool
        Maximize the log marginal likelihood by multi-start Nelder-Mead.
    optimize_noise : bool
        Also optimize the noise variance (fixed otherwise).
    signal_bounds, length_bounds : (float, float)
        Bounds on ``log signal_variance`` and ``log length_scale``.

    Raises
    ------
    NotPositiveDefinite
        Duplicate input rows with zero noise variance; the covariance is
        exactly singular and jitter would only hide it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) != len(Y) or len(X) < 1:
        raise ValueError("X and y must have the same nonzero number of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite training data")
    t = Y.shape[1]
    if h0 is None:
        h0 = default_hyperparameters(X)
    h0s = list(h0) if isinstance(h0, (list, tuple)) else [h0] * t
    if any(h.noise_variance == 0 for h in h0s) and len(np.unique(X, axis=0)) < len(X):
        raise NotPositiveDefinite(
            "duplicate input rows with zero noise variance; remove duplicates or set noise_variance > 0")
    bounds = _bounds(X.shape[1], optimize_noise, signal_bounds, length_bounds)
    rng = np.random.default_rng(seed)
    targets = []
    for j in range(t):
        col = Y[:, j]
        if standardize:
            shift = float(np.mean(col))
            sd = float(np.std(col))
            scale = sd if sd > 0 else 1.0
        else:
            shift, scale = 0.0, 1.0
        ys = (col - shift) / scale
        h = h0s[j]
        if optimize and len(X) > 1:
            h = _optimize(X, ys, h, optimize_noise, n_starts, maxfev, rng, bounds)
        targets.append(_factorize(X, ys, h, shift, scale))
    return GprModel(X, Y, targets, standardize)


def predict(model, x):
    return model.predict(x)


def log_marginal_likelihood(model, target=0):
    return model.log_marginal_likelihood(target)


def covariance_matrix(model, target=0):
    return model.covariance_matrix(target)
