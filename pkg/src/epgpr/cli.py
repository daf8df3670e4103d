"""Command-line front end.

Subcommands
-----------
trace     diagonalize the family along the orbit
group     sort orbit spectra into paths and report exchanging pairs
find-ep   surrogate EP search for every exchanging pair
oracle    EP by Newton iteration on the exact spectrum
gpr-fit   fit a GP to a data file and report diagnostics

Settings come from the defaults of :class:`RunConfig`, then ``--config``
(a JSON file), then command-line flags. Every command writes
``run_config.json`` next to its results, which reproduces the run.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
4 no exchanging pair, 5 oracle found no root, 6 a search did not converge.
On failure one line ``epgpr: error=<Type> exit=<code> reason=<text>`` is
written to standard error.
"""

import argparse
import dataclasses
import datetime
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from . import __version__, gpr
from ._io import atomic_write, cplx, read_json, write_csv, write_json
from .epsearch import EpSearchConfig, brute_force_ep, closest_pair, iterate
from .errors import (
    AmbiguousAssignment,
    ConfigError,
    ConvergenceFailure,
    DimensionMismatch,
    EPError,
    NoRootFound,
    NonFinite,
    NotExchanging,
    NotPositiveDefinite,
    ParseError,
    SolverError,
    SymmetryViolation,
    TooSparse,
)
from .grouping import extract_training_set, group_paths
from .linalg import eigendecompose
from .models import (
    MIN_ORBIT_POINTS,
    Orbit,
    OrbitSpectrumSet,
    ParameterMap,
    kato2,
    load_family_from_file,
    random5,
    trace_orbit,
)

log = logging.getLogger("epgpr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NO_SIGNATURE = 4
EXIT_NO_ROOT = 5
EXIT_NOT_CONVERGED = 6

FAMILIES = ("kato2", "random5")
ORACLE_MAX_DIM = 16


class NotConverged(EPError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on; JSON round-trips through to_dict/from_dict."""

    family: str = "kato2"
    seed: int = 42
    family_file: Optional[str] = None
    orbit_center: tuple = (0.0, 0.8)
    orbit_radius: object = 0.5
    n_points: int = 100
    features: bool = False
    metric: str = "euclidean"
    matching: str = "greedy"
    subsample: int = 20
    noise_variance: float = gpr.DEFAULT_NOISE_VARIANCE
    optimize: bool = True
    n_starts: int = 5
    maxfev: int = 500
    signal_bounds: tuple = gpr.LOG_SIGNAL_BOUNDS
    length_bounds: tuple = gpr.LOG_LENGTH_BOUNDS
    optimizer_seed: int = 0
    max_iter: int = 25
    drop_factor: float = 1e3
    min_gap: float = 10.0
    exploration_after: Optional[int] = 2
    delta_lambda_tol: Optional[float] = None
    parameter_map: Optional[dict] = None
    oracle_start: Optional[tuple] = None
    spectra_file: Optional[str] = None
    data_file: Optional[str] = None
    jobs: int = 1
    out_dir: str = "."

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        def pair(name, value):
            try:
                a, b = (float(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be two numbers, got {value!r}") from None
            return (a, b)

        if self.family_file is None and self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        self.orbit_center = pair("orbit_center", self.orbit_center)
        if isinstance(self.orbit_radius, (list, tuple)):
            if len(self.orbit_radius) == 1:
                self.orbit_radius = self.orbit_radius[0]
            else:
                self.orbit_radius = pair("orbit_radius", self.orbit_radius)
        if not isinstance(self.orbit_radius, tuple):
            self.orbit_radius = float(self.orbit_radius)
        radii = self.orbit_radius if isinstance(self.orbit_radius, tuple) else (self.orbit_radius,)
        if any(not r > 0 for r in radii):
            raise ConfigError("orbit_radius must be positive")
        if not isinstance(self.n_points, int) or self.n_points < MIN_ORBIT_POINTS:
            raise ConfigError(f"n_points must be an integer >= {MIN_ORBIT_POINTS}, got {self.n_points!r}")
        if self.metric not in ("euclidean", "cosine"):
            raise ConfigError(f"metric must be euclidean or cosine, got {self.metric!r}")
        if self.matching not in ("greedy", "optimal"):
            raise ConfigError(f"matching must be greedy or optimal, got {self.matching!r}")
        if not MIN_ORBIT_POINTS <= self.subsample <= self.n_points:
            raise ConfigError(f"subsample must lie in [{MIN_ORBIT_POINTS}, n_points]")
        if not self.noise_variance >= 0:
            raise ConfigError("noise_variance must be >= 0")
        self.signal_bounds = pair("signal_bounds", self.signal_bounds)
        self.length_bounds = pair("length_bounds", self.length_bounds)
        for name in ("signal_bounds", "length_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy low < high")
        if self.n_starts < 1 or self.maxfev < 1 or self.max_iter < 1 or self.jobs < 1:
            raise ConfigError("n_starts, maxfev, max_iter and jobs must be positive")
        if not self.drop_factor > 1:
            raise ConfigError("drop_factor must exceed 1")
        if self.exploration_after is not None and self.exploration_after < 2:
            raise ConfigError("exploration_after must be >= 2 (two estimates are extrapolated)")
        if self.oracle_start is not None:
            self.oracle_start = pair("oracle_start", self.oracle_start)
        if self.parameter_map is not None:
            pm = self.parameter_map
            if not isinstance(pm, dict) or set(pm) != {"center", "relative_radius"}:
                raise ConfigError("parameter_map needs exactly the keys center and relative_radius")
            pair("parameter_map.center", pm["center"])
            if not float(pm["relative_radius"]) > 0:
                raise ConfigError("parameter_map.relative_radius must be positive")
        return self

    def search_config(self):
        return EpSearchConfig(
            max_iter=self.max_iter, drop_factor=self.drop_factor, min_gap=self.min_gap,
            exploration_after=self.exploration_after, delta_lambda_tol=self.delta_lambda_tol,
            noise_variance=self.noise_variance, optimize=self.optimize, n_starts=self.n_starts,
            maxfev=self.maxfev, seed=self.optimizer_seed,
            signal_bounds=self.signal_bounds, length_bounds=self.length_bounds,
        )


# ---------------------------------------------------------------------------
# building blocks


def build_family(cfg):
    if cfg.family_file is not None:
        return load_family_from_file(cfg.family_file)
    return kato2() if cfg.family == "kato2" else random5(cfg.seed)


def build_orbit(cfg):
    return Orbit(complex(*cfg.orbit_center), cfg.orbit_radius, cfg.n_points)


def build_parameter_map(cfg):
    if cfg.parameter_map is None:
        return None
    pm = cfg.parameter_map
    return ParameterMap(tuple(float(v) for v in pm["center"]), float(pm["relative_radius"]))


def _metadata(command):
    return {
        "command": command,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def _out(cfg, name):
    return Path(cfg.out_dir) / name


def _save_config(cfg):
    write_json(_out(cfg, "run_config.json"), cfg.to_dict())


def load_spectra(path):
    try:
        data = read_json(path)
    except ValueError as exc:
        raise ParseError(str(exc), where=str(path)) from exc
    return OrbitSpectrumSet.from_dict(data)


def _spectra(cfg, family=None):
    if cfg.spectra_file is not None:
        return load_spectra(cfg.spectra_file)
    return trace_orbit(family or build_family(cfg), build_orbit(cfg), features=cfg.features, jobs=cfg.jobs)


def _group(cfg, s):
    return group_paths(s, metric=cfg.metric, matching=cfg.matching)


# ---------------------------------------------------------------------------
# commands


def cmd_trace(cfg):
    family = build_family(cfg)
    orbit = build_orbit(cfg)
    s = trace_orbit(family, orbit, features=cfg.features, jobs=cfg.jobs)
    doc = s.to_dict()
    doc["metadata"] = _metadata("trace")
    write_json(_out(cfg, "spectra.json"), doc)
    # columns follow the continued paths when grouping succeeds, LAPACK order otherwise
    try:
        values = np.stack([p.values for p in group_paths(s, check_resolution=False).paths], axis=1)
    except EPError:
        values = s.spectra
    header = ["phi"] + [f"{part}_lambda_{k}" for k in range(s.dim) for part in ("re", "im")]
    rows = [[float(phi)] + [v for z in row for v in cplx(z)] for phi, row in zip(orbit.angles, values)]
    write_csv(_out(cfg, "spectra.csv"), header, rows)
    log.info("traced %d points of a %dx%d family", s.n_points, s.dim, s.dim)
    return EXIT_OK


def cmd_group(cfg):
    s = _spectra(cfg)
    report = _group(cfg, s)
    doc = report.to_dict()
    doc["path_values"] = [[cplx(z) for z in p.values] for p in report.paths]
    doc["metadata"] = _metadata("group")
    write_json(_out(cfg, "groups.json"), doc)
    header = ["index", "re_kappa", "im_kappa"] + [
        f"{part}_path_{k}" for k in range(len(report.paths)) for part in ("re", "im")]
    rows = [[i] + cplx(s.kappas[i]) + [v for p in report.paths for v in cplx(p.values[i])]
            for i in range(s.n_points)]
    write_csv(_out(cfg, "paths.csv"), header, rows)
    print(f"exchanging pairs: {report.exchanging_pairs}; closed paths: {report.closed_paths}")
    if not report.exchanging_pairs:
        raise NotExchanging("no exchanging pair on this orbit")
    return EXIT_OK


def cmd_find_ep(cfg):
    family = build_family(cfg)
    s = _spectra(cfg, family)
    report = _group(cfg, s)
    if not report.exchanging_pairs:
        raise NotExchanging("no exchanging pair on this orbit")
    search = cfg.search_config()
    pmap = build_parameter_map(cfg)

    def run(i):
        training = extract_training_set(report, i, cfg.subsample)
        return iterate(family, training, search, parameter_map=pmap)

    idx = range(len(report.exchanging_pairs))
    if cfg.jobs > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run, idx))
    else:
        results = [run(i) for i in idx]

    docs = []
    for i, res in enumerate(results):
        d = res.to_dict()
        d["pair"] = list(report.exchanging_pairs[i])
        docs.append(d)
        atomic_write(_out(cfg, f"iterations_{i}.csv"), res.state.to_csv())
        print(f"pair {report.exchanging_pairs[i]}: {res.status} kappa_ep={complex(res.kappa_ep)!r} "
              f"delta_lambda={res.delta_lambda:.3e} diagonalizations={res.n_diagonalizations}")
    write_json(_out(cfg, "ep_results.json"), {"results": docs, "metadata": _metadata("find-ep")})
    failed = [i for i, r in enumerate(results) if not r.converged]
    if failed:
        raise NotConverged(f"searches {failed} did not converge")
    return EXIT_OK


def cmd_oracle(cfg):
    family = build_family(cfg)
    if family.dim > ORACLE_MAX_DIM:
        raise ConfigError(f"oracle supports dim <= {ORACLE_MAX_DIM}, family has {family.dim}")
    start = complex(*(cfg.oracle_start or cfg.orbit_center))
    kappa = brute_force_ep(family, start)
    lam1, lam2 = closest_pair(eigendecompose(family(kappa)).eigenvalues)
    doc = {
        "kappa_ep": cplx(kappa),
        "start": cplx(start),
        "lam1": cplx(lam1),
        "lam2": cplx(lam2),
        "delta_lambda": abs(lam1 - lam2),
        "abs_p": abs((lam1 - lam2) ** 2),
        "metadata": _metadata("oracle"),
    }
    write_json(_out(cfg, "oracle.json"), doc)
    print(f"oracle kappa_ep={complex(kappa)!r} delta_lambda={abs(lam1 - lam2):.3e}")
    return EXIT_OK


def _load_dataset(path):
    try:
        data = read_json(path)
    except ValueError as exc:
        raise ParseError(str(exc), where=str(path)) from exc
    if not isinstance(data, dict) or "X" not in data or "y" not in data:
        raise ParseError("expected an object with keys X and y", where=str(path))
    try:
        X = np.atleast_2d(np.asarray(data["X"], dtype=float))
        Y = np.asarray(data["y"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), where=str(path)) from exc
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or len(X) != len(Y) or len(X) == 0:
        raise ParseError("X and y must have the same nonzero number of rows", where=str(path))
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ParseError("non-finite values", where=str(path))
    return X, Y


def leave_one_out_residuals(model, target=0):
    """Closed-form leave-one-out residuals ``alpha_i / (K^-1)_ii`` in output units."""
    t = model.targets[target]
    n = len(model.X)
    kinv = scipy.linalg.cho_solve((t.chol, True), np.eye(n), check_finite=False)
    return np.asarray(t.alpha, dtype=float) / np.diag(kinv) * t.scale


def cmd_gpr_fit(cfg):
    if cfg.data_file is None:
        raise ConfigError("gpr-fit needs --data")
    X, Y = _load_dataset(cfg.data_file)
    h0 = gpr.default_hyperparameters(X, cfg.noise_variance)
    model = gpr.fit(X, Y, h0=h0, optimize=cfg.optimize, n_starts=cfg.n_starts, maxfev=cfg.maxfev,
                    seed=cfg.optimizer_seed, signal_bounds=cfg.signal_bounds,
                    length_bounds=cfg.length_bounds)
    train_err = np.max(np.abs(model.predict_mean(X) - Y), axis=0)
    diagnostics = []
    for j in range(model.n_targets):
        d = {
            "log_marginal_likelihood": model.log_marginal_likelihood(j),
            "hyperparameters": model.targets[j].hyper.to_dict(),
            "train_max_abs_residual": float(train_err[j]),
        }
        if len(X) > 1:
            loo = leave_one_out_residuals(model, j)
            d["loo_rms"] = float(np.sqrt(np.mean(loo ** 2)))
            d["loo_max_abs"] = float(np.max(np.abs(loo)))
        diagnostics.append(d)
    write_json(_out(cfg, "gpr_model.json"),
               {"model": model.to_dict(), "diagnostics": diagnostics, "metadata": _metadata("gpr-fit")})
    for j, d in enumerate(diagnostics):
        print(f"target {j}: lml={d['log_marginal_likelihood']:.6g} "
              f"train_max_abs_residual={d['train_max_abs_residual']:.3e}")
    return EXIT_OK


COMMANDS = {
    "trace": cmd_trace,
    "group": cmd_group,
    "find-ep": cmd_find_ep,
    "oracle": cmd_oracle,
    "gpr-fit": cmd_gpr_fit,
}


# ---------------------------------------------------------------------------
# argument handling


def _add_config_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON run configuration; flags override it")
    p.add_argument("--family", default=S, choices=FAMILIES)
    p.add_argument("--seed", type=int, default=S, help="seed of the random5 family")
    p.add_argument("--family-file", dest="family_file", default=S, help="JSON matrix family")
    p.add_argument("--orbit-center", dest="orbit_center", type=float, nargs=2, default=S, metavar=("RE", "IM"))
    p.add_argument("--orbit-radius", dest="orbit_radius", type=float, nargs="+", default=S,
                   help="one value for a circle, two for an ellipse")
    p.add_argument("--n-points", dest="n_points", type=int, default=S)
    p.add_argument("--features", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--metric", choices=("euclidean", "cosine"), default=S)
    p.add_argument("--matching", choices=("greedy", "optimal"), default=S)
    p.add_argument("--subsample", type=int, default=S)
    p.add_argument("--noise-variance", dest="noise_variance", type=float, default=S)
    p.add_argument("--optimize", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--n-starts", dest="n_starts", type=int, default=S)
    p.add_argument("--maxfev", type=int, default=S)
    p.add_argument("--signal-bounds", dest="signal_bounds", type=float, nargs=2, default=S)
    p.add_argument("--length-bounds", dest="length_bounds", type=float, nargs=2, default=S)
    p.add_argument("--optimizer-seed", dest="optimizer_seed", type=int, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--drop-factor", dest="drop_factor", type=float, default=S)
    p.add_argument("--min-gap", dest="min_gap", type=float, default=S)
    p.add_argument("--exploration-after", dest="exploration_after", type=int, default=S)
    p.add_argument("--no-exploration", dest="exploration_after", action="store_const", const=None, default=S)
    p.add_argument("--delta-lambda-tol", dest="delta_lambda_tol", type=float, default=S)
    p.add_argument("--oracle-start", dest="oracle_start", type=float, nargs=2, default=S, metavar=("RE", "IM"))
    p.add_argument("--spectra", dest="spectra_file", default=S, help="spectrum JSON written by trace")
    p.add_argument("--data", dest="data_file", default=S, help="dataset JSON for gpr-fit")
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="epgpr", description="Exceptional-point search with GP surrogates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        _add_config_flags(sub.add_parser(name, help=fn.__name__.replace("cmd_", "").replace("_", " ")))
    return parser


def resolve_config(ns):
    """Defaults, then ``--config`` file, then explicit flags."""
    data = {}
    if "config" in ns:
        try:
            data = read_json(ns.config)
        except OSError as exc:
            raise ConfigError(f"cannot read {ns.config}: {exc.strerror}") from exc
        except ValueError as exc:
            raise ParseError(str(exc), where=ns.config) from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    skip = {"config", "command", "verbose"}
    data.update({k: v for k, v in vars(ns).items() if k not in skip})
    return RunConfig.from_dict(data)


def exit_code_for(exc):
    if isinstance(exc, NoRootFound):
        return EXIT_NO_ROOT
    if isinstance(exc, NotExchanging):
        return EXIT_NO_SIGNATURE
    if isinstance(exc, NotConverged):
        return EXIT_NOT_CONVERGED
    if isinstance(exc, (ConfigError, ParseError, SymmetryViolation, DimensionMismatch, NonFinite,
                        FileNotFoundError, IsADirectoryError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, ConvergenceFailure, NotPositiveDefinite, TooSparse,
                        AmbiguousAssignment, EPError)):
        return EXIT_SOLVER
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return None


_HINTS = {
    TooSparse: "increase n_points",
    AmbiguousAssignment: "shift the orbit or change n_points",
}


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = resolve_config(ns)
        _save_config(cfg)
        return COMMANDS[ns.command](cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = exit_code_for(exc)
        if code is None:
            raise
        reason = " ".join(str(exc).split())
        hint = next((h for t, h in _HINTS.items() if isinstance(exc, t)), None)
        if hint:
            reason += f" (hint: {hint})"
        print(f"epgpr: error={type(exc).__name__} exit={code} reason={reason}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
