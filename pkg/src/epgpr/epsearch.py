"""Surrogate-driven localization of exceptional points.

Each iteration fits GP surrogates of ``p = (l1 - l2)**2`` and
``s = (l1 + l2)/2`` over the parameter plane, finds the root of the
surrogate ``p``, diagonalizes the family once at that point and adds the
eigenvalue pair that best matches the surrogate predictions.
"""

import csv
import io
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import gpr
from .errors import AmbiguousPair, NoRootFound, ZeroVariance
from .grouping import TrainingPair
from .linalg import eigendecompose, min_eigenvalue_spd
from .models import evaluate_family

log = logging.getLogger(__name__)

FD_STEP = 1e-6
VARIANCE_FLOOR = 1e-16

RUNNING = "running"
CONVERGED_KERNEL_DROP = "converged_kernel_drop"
CONVERGED_DELTA_LAMBDA = "converged_delta_lambda"
CONVERGED_MAX_ITER = "converged_max_iter"
FAILED = "failed"


def _as_vec(x):
    if isinstance(x, complex) or np.iscomplexobj(x):
        z = complex(x)
        return np.array([z.real, z.imag])
    return np.asarray(x, dtype=float).reshape(2)


# ---------------------------------------------------------------------------
# root search on the surrogate


def _jacobian(F, x, fd_step):
    J = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = fd_step
        J[:, k] = (F(x + e) - F(x - e)) / (2 * fd_step)
    return J


def _newton(F, x0, max_iter, fd_step):
    """Damped Newton; returns ``(x, |F(x)|, |J^-1 F(x)|)``."""
    x = np.array(x0, dtype=float)
    fx = F(x)
    nx = np.linalg.norm(fx)
    newton_step = np.inf
    for _ in range(max_iter):
        if nx == 0.0:
            return x, 0.0, 0.0
        try:
            dx = -np.linalg.solve(_jacobian(F, x, fd_step), fx)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)):
            break
        newton_step = np.linalg.norm(dx)
        t = 1.0
        for _ in range(40):
            xt = x + t * dx
            ft = F(xt)
            nt = np.linalg.norm(ft)
            if nt < nx:
                break
            t *= 0.5
        else:
            break
        step = np.linalg.norm(xt - x)
        x, fx, nx = xt, ft, nt
        if step <= 4e-16 * max(1.0, np.linalg.norm(x)):
            break
    try:
        newton_step = np.linalg.norm(np.linalg.solve(_jacobian(F, x, fd_step), fx))
    except np.linalg.LinAlgError:
        pass
    return x, nx, newton_step


def root_search(model_p, x0, extra_starts=(), tol=1e-10, xtol=1e-12, max_iter=100, fd_step=FD_STEP,
                prefer=None):
    """Zero of the two surrogate outputs of ``model_p`` (Re p, Im p).

    Damped Newton with a central finite-difference Jacobian from every start
    point. A point is accepted when ``|p| <= tol * scale`` or when the
    remaining Newton correction is below ``xtol * max(1, |x|)``; the latter
    covers surrogates whose rounding noise exceeds ``tol * scale``. If no
    start succeeds, the best point is polished by direct minimization of
    ``|p|^2``. Only the surrogate is evaluated.

    Without ``prefer`` the first accepted root is returned. With it, every
    start is run and the accepted root closest to ``prefer`` wins.

    Raises
    ------
    NoRootFound
        Residual above tolerance everywhere; ``exc.best`` holds the best point.
    """

    def F(x):
        return model_p.predict_mean(x)[0]

    scale = max(t.scale for t in model_p.targets)
    threshold = tol * scale

    def accepted(x, r, dx):
        return r <= threshold or dx <= xtol * max(1.0, np.linalg.norm(x))

    starts = [_as_vec(x0)] + [_as_vec(s) for s in extra_starts]
    best_x, best_r = None, np.inf
    roots = []
    for s in starts:
        x, r, dx = _newton(F, s, max_iter, fd_step)
        if accepted(x, r, dx):
            if prefer is None:
                return x
            roots.append(x)
        elif r < best_r:
            best_x, best_r = x, r
    if roots:
        target = _as_vec(prefer)
        return min(roots, key=lambda x: np.linalg.norm(x - target))
    res = minimize(lambda x: float(np.sum(F(x) ** 2)), best_x, method="Nelder-Mead",
                   options={"xatol": 1e-14, "fatol": 1e-30, "maxfev": 2000})
    x, r, dx = _newton(F, res.x, max_iter, fd_step)
    if accepted(x, r, dx):
        return x
    if r < best_r:
        best_x, best_r = x, r
    raise NoRootFound(f"surrogate residual {best_r:.3e} above {threshold:.3e}", best=best_x, residual=best_r)


# ---------------------------------------------------------------------------
# pair selection


@dataclass(frozen=True, order=True)
class PairDiscrepancy:
    c: float
    pair: tuple


def pair_discrepancy(lam1, lam2, pred_p, pred_s):
    """Gaussian-exponent mismatch between one eigenvalue pair and the predictions.

    ``pred_p`` and ``pred_s`` are ``(real, imag)`` pairs of
    :class:`~epgpr.gpr.Prediction`.
    """
    p = (lam1 - lam2) ** 2
    s = 0.5 * (lam1 + lam2)
    c = 0.0
    for value, pred in zip((p.real, p.imag, s.real, s.imag), (*pred_p, *pred_s)):
        if not pred.variance > 0:
            raise ZeroVariance("prediction variance is zero; perturb the query point or floor the variance")
        c += (value - pred.mean) ** 2 / (2 * pred.variance)
    return c


def pair_discrepancy_all(spectrum, pred_p, pred_s):
    """All unordered pairs of ``spectrum`` scored and sorted by ascending discrepancy."""
    spectrum = np.asarray(spectrum, dtype=complex)
    if spectrum.size < 2:
        raise ValueError("need at least two eigenvalues")
    out = [PairDiscrepancy(pair_discrepancy(spectrum[i], spectrum[j], pred_p, pred_s), (i, j))
           for i, j in itertools.combinations(range(spectrum.size), 2)]
    return sorted(out)


def gap_ratio(discrepancies):
    """``c2 / c1`` for a sorted discrepancy list (inf when c1 == 0 < c2)."""
    if len(discrepancies) < 2:
        return np.inf
    c1, c2 = discrepancies[0].c, discrepancies[1].c
    if c1 == 0:
        return np.inf if c2 > 0 else 1.0
    return c2 / c1


# ---------------------------------------------------------------------------
# iteration


@dataclass
class EpSearchConfig:
    max_iter: int = 25
    drop_factor: float = 1e3
    min_gap: float = 10.0
    exploration_after: Optional[int] = 2
    delta_lambda_tol: Optional[float] = None
    noise_variance: float = gpr.DEFAULT_NOISE_VARIANCE
    optimize: bool = True
    n_starts: int = 5
    maxfev: int = 500
    seed: int = 0
    root_tol: float = 1e-10
    signal_bounds: tuple = gpr.LOG_SIGNAL_BOUNDS
    length_bounds: tuple = gpr.LOG_LENGTH_BOUNDS

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EpSearchState:
    """Training data and per-iteration diagnostics.

    Index 0 of every history describes the initial training set; index k
    the training set after the k-th iterate was added.
    """

    training: list
    kappa_history: list = field(default_factory=list)
    kernel_eig_history: list = field(default_factory=list)
    delta_lambda_history: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    exploration: list = field(default_factory=list)
    status: str = RUNNING

    def to_dict(self):
        cplx = lambda z: [z.real, z.imag]  # noqa: E731
        return {
            "training": [{"kappa": cplx(t.kappa), "lam1": cplx(t.lam1), "lam2": cplx(t.lam2)} for t in self.training],
            "kappa_history": [cplx(k) for k in self.kappa_history],
            "kernel_eig_history": list(self.kernel_eig_history),
            "delta_lambda_history": list(self.delta_lambda_history),
            # a single candidate pair has an infinite gap, written as null
            "gap_history": [float(g) if np.isfinite(g) else None for g in self.gap_history],
            "exploration": [cplx(k) for k in self.exploration],
            "status": self.status,
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "re_kappa", "im_kappa", "min_kernel_eig", "delta_lambda"])
        for k, (kap, eig, dl) in enumerate(zip(self.kappa_history, self.kernel_eig_history,
                                               self.delta_lambda_history)):
            w.writerow([k, repr(kap.real), repr(kap.imag), repr(eig), repr(dl)])
        return buf.getvalue()


@dataclass
class EpResult:
    kappa_ep: complex
    lam1: complex
    lam2: complex
    delta_lambda: float
    iterations: int
    n_diagonalizations: int
    state: EpSearchState
    kappa_predicted: Optional[complex] = None
    physical: Optional[tuple] = None
    flags: list = field(default_factory=list)

    @property
    def status(self):
        return self.state.status

    @property
    def converged(self):
        return self.status.startswith("converged_") and self.status != CONVERGED_MAX_ITER

    def to_dict(self):
        cplx = lambda z: None if z is None else [z.real, z.imag]  # noqa: E731
        return {
            "kappa_ep": cplx(self.kappa_ep),
            "kappa_predicted": cplx(self.kappa_predicted),
            "physical": None if self.physical is None else [float(v) for v in self.physical],
            "lam1": cplx(self.lam1),
            "lam2": cplx(self.lam2),
            "delta_lambda": self.delta_lambda,
            "iterations": self.iterations,
            "n_diagonalizations": self.n_diagonalizations,
            "status": self.status,
            "flags": list(self.flags),
            "diagnostics": self.state.to_dict(),
        }


def initial_delta_lambda(pairs):
    """Mean eigenvalue separation over the initial training pairs."""
    return float(np.mean([abs(t.lam1 - t.lam2) for t in pairs]))


def check_convergence(state, cfg):
    """Status after the latest history entry.

    Converged by kernel drop when the smallest covariance eigenvalue fell by
    at least ``cfg.drop_factor`` against the previous entry and the newest
    separation is below the initial one. With ``cfg.delta_lambda_tol`` set,
    the newest separation must also be at or below it; reaching it alone is
    enough once a kernel drop has been seen earlier.
    """
    eig = state.kernel_eig_history
    dl = state.delta_lambda_history
    if len(eig) < 2:
        return RUNNING
    tiny = 1e-300
    drops = [eig[k - 1] >= cfg.drop_factor * max(eig[k], tiny) for k in range(1, len(eig))]
    improved = dl[-1] < dl[0]
    if cfg.delta_lambda_tol is None:
        return CONVERGED_KERNEL_DROP if drops[-1] and improved else RUNNING
    if dl[-1] <= cfg.delta_lambda_tol:
        if drops[-1]:
            return CONVERGED_KERNEL_DROP
        if any(drops):
            return CONVERGED_DELTA_LAMBDA
    return RUNNING


def training_arrays(pairs):
    X = np.array([[t.kappa.real, t.kappa.imag] for t in pairs])
    P = np.array([[t.p.real, t.p.imag] for t in pairs])
    S = np.array([[t.s.real, t.s.imag] for t in pairs])
    return X, P, S


def fit_surrogates(pairs, cfg, h0=None):
    """Fit ``(model_p, model_s)``; ``h0`` is an optional list of four start hyperparameters."""
    X, P, S = training_arrays(pairs)
    if h0 is None:
        h0 = [gpr.default_hyperparameters(X, cfg.noise_variance)] * 4
    kw = dict(optimize=cfg.optimize, n_starts=cfg.n_starts, maxfev=cfg.maxfev, seed=cfg.seed,
              signal_bounds=cfg.signal_bounds, length_bounds=cfg.length_bounds)
    model_p = gpr.fit(X, P, h0=h0[:2], **kw)
    model_s = gpr.fit(X, S, h0=h0[2:], **kw)
    return model_p, model_s


def min_kernel_eigenvalue(*models):
    """Smallest covariance-matrix eigenvalue over all targets of the given models.

    Evaluated in extended precision: with large signal variances the float64
    rounding error of an eigensolver exceeds the noise variance, which is
    where the eigenvalue lands once a near-duplicate point is added.
    """
    return min(min_eigenvalue_spd(m.covariance_matrix(j, dtype=np.longdouble))
               for m in models for j in range(m.n_targets))


def select_pair(spectrum, kappa, model_p, model_s):
    """Pick the eigenvalue pair matching the surrogates at ``kappa``; returns (pair, sorted list)."""
    x = _as_vec(kappa)
    preds = []
    for m in (model_p, model_s):
        for j, pr in enumerate(m.predict(x)):
            floor = VARIANCE_FLOOR * m.targets[j].scale ** 2
            preds.append(gpr.Prediction(pr.mean, max(pr.variance, floor)))
    ranked = pair_discrepancy_all(spectrum, preds[:2], preds[2:])
    i, j = ranked[0].pair
    return TrainingPair(complex(kappa), complex(spectrum[i]), complex(spectrum[j])), ranked


def _default_diagonalize(family):
    return lambda kappa: eigendecompose(evaluate_family(family, kappa)).eigenvalues


def iterate(family, initial, cfg=None, diagonalize: Optional[Callable] = None, parameter_map=None):
    """Refine an EP estimate starting from an exchanging pair's training set.

    ``diagonalize(kappa)`` returns the full spectrum; by default the family
    is diagonalized directly. Exactly one call per iteration, plus one per
    exploration point.
    """
    cfg = cfg or EpSearchConfig()
    if len(initial) < 8:
        raise ValueError("need at least 8 initial training pairs")
    diag = diagonalize or _default_diagonalize(family)
    training = list(initial)
    state = EpSearchState(training=training)
    flags = []

    ks = np.array([t.kappa for t in initial])
    center = complex(ks.mean())
    radius = float(np.max(np.abs(ks - center)))
    start = min(initial, key=lambda t: abs(t.p))
    state.kappa_history.append(start.kappa)
    state.delta_lambda_history.append(initial_delta_lambda(initial))

    n_diag = 0
    hyper = None
    newest = None
    predicted = None
    while True:
        model_p, model_s = fit_surrogates(training, cfg, hyper)
        hyper = model_p.hypers + model_s.hypers
        # the p surrogate drives the root search; its covariance carries the drop
        state.kernel_eig_history.append(min_kernel_eigenvalue(model_p))
        k = len(state.kernel_eig_history) - 1

        status = check_convergence(state, cfg)
        best_known = min(training, key=lambda t: abs(t.p)).kappa
        starts = [best_known] if newest is None else [best_known, newest.kappa]
        starts.append(center)
        try:
            root = root_search(model_p, starts[0], extra_starts=starts[1:], tol=cfg.root_tol,
                               prefer=center)
        except NoRootFound as exc:
            if status != RUNNING:
                state.status = status
                break
            if exc.best is None or not np.all(np.isfinite(exc.best)):
                log.warning("root search failed at iteration %d: %s", k, exc)
                state.status = FAILED
                break
            # the best minimizer of |p|^2 is still the most informative next point
            msg = f"iteration {k + 1}: {exc}; continuing from the best point"
            log.info(msg)
            flags.append(msg)
            root = exc.best
        predicted = complex(root[0], root[1])
        if status != RUNNING:
            state.status = status
            break
        if k >= cfg.max_iter:
            state.status = CONVERGED_MAX_ITER
            break
        if abs(predicted - center) > 2 * radius:
            log.warning("surrogate root %s lies outside twice the orbit radius", predicted)

        spectrum = diag(predicted)
        n_diag += 1
        pair, ranked = select_pair(spectrum, predicted, model_p, model_s)
        g = gap_ratio(ranked)
        state.gap_history.append(g)
        if g < cfg.min_gap:
            msg = f"iteration {k + 1}: pair gap ratio {g:.3g} below {cfg.min_gap:g}"
            warnings.warn(msg, AmbiguousPair)
            flags.append(msg)
        training.append(pair)
        newest = pair

        if cfg.exploration_after is not None and k + 1 == cfg.exploration_after:
            prev = state.kappa_history[-1]
            kx = predicted + (predicted - prev)
            xspec = diag(kx)
            n_diag += 1
            xpair, _ = select_pair(xspec, kx, model_p, model_s)
            training.append(xpair)
            state.exploration.append(kx)

        state.kappa_history.append(predicted)
        dl = pair.delta
        if len(state.delta_lambda_history) > 1 and dl > state.delta_lambda_history[-1]:
            log.info("separation increased at iteration %d: %.3e > %.3e", k + 1, dl,
                     state.delta_lambda_history[-1])
        state.delta_lambda_history.append(dl)

    if newest is None:
        newest = start
    physical = parameter_map.forward(newest.kappa) if parameter_map is not None else None
    return EpResult(
        kappa_ep=newest.kappa,
        lam1=newest.lam1,
        lam2=newest.lam2,
        delta_lambda=newest.delta,
        iterations=len(state.kappa_history) - 1,
        n_diagonalizations=n_diag,
        state=state,
        kappa_predicted=predicted,
        physical=None if physical is None else tuple(float(v) for v in physical),
        flags=flags,
    )


# ---------------------------------------------------------------------------
# brute-force oracle


def closest_pair(spectrum):
    spectrum = np.asarray(spectrum)
    best = None
    for i, j in itertools.combinations(range(spectrum.size), 2):
        d = abs(spectrum[i] - spectrum[j])
        if best is None or d < best[0]:
            best = (d, i, j)
    return spectrum[best[1]], spectrum[best[2]]


def brute_force_ep(family, x0, tol=1e-12, max_iter=100, fd_step=FD_STEP):
    """EP by Newton iteration on the exact ``p`` of the closest eigenvalue pair.

    ``p`` is analytic in kappa, so the 2x2 finite-difference Jacobian reduces
    to one complex central difference. Stops when the Newton step stagnates
    at rounding level; succeeds if ``|p| <= tol * max(1, |M|_max**2)``.
    """

    def p_of(kappa):
        w = eigendecompose(evaluate_family(family, kappa)).eigenvalues
        a, b = closest_pair(w)
        return (a - b) ** 2

    kappa = complex(*_as_vec(x0))
    pk = p_of(kappa)
    best = (abs(pk), kappa)
    for _ in range(max_iter):
        if pk == 0:
            break
        dp = (p_of(kappa + fd_step) - p_of(kappa - fd_step)) / (2 * fd_step)
        if dp == 0 or not np.isfinite(dp):
            break
        step = -pk / dp
        t = 1.0
        for _ in range(40):
            trial = kappa + t * step
            pt = p_of(trial)
            if abs(pt) < abs(pk) or abs(t * step) <= 1e-15 * max(1.0, abs(kappa)):
                break
            t *= 0.5
        moved = abs(trial - kappa)
        kappa, pk = trial, pt
        if abs(pk) < best[0]:
            best = (abs(pk), kappa)
        if moved <= 1e-15 * max(1.0, abs(kappa)):
            break
    scale = max(1.0, float(np.max(np.abs(evaluate_family(family, best[1])))) ** 2)
    if best[0] > tol * scale:
        raise NoRootFound(f"|p| = {best[0]:.3e} above tolerance", best=best[1], residual=best[0])
    return best[1]
