"""Stepwise grouping of orbit spectra into continuous eigenvalue paths.

Paths are continued angle by angle, each taking the closest eigenvalue of
the next spectrum. When several paths prefer the same eigenvalue, the path
with the smallest distance keeps it and the others are re-sorted among the
eigenvalues still free. A pair of paths whose endpoints swap after one loop
is the signature of an exceptional point inside the loop.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousAssignment, DimensionMismatch, NotExchanging, TooSparse, ZeroVector

log = logging.getLogger(__name__)

TIE_TOL = 1e-14


def euclidean_distance(lam_m, lam_n):
    return abs(complex(lam_m) - complex(lam_n))


def cosine_distance(psi_m, psi_n):
    """``1 - cos(angle)`` between two real vectors; lies in [0, 2]."""
    psi_m = np.asarray(psi_m, dtype=float)
    psi_n = np.asarray(psi_n, dtype=float)
    if psi_m.shape != psi_n.shape:
        raise DimensionMismatch(f"shapes {psi_m.shape} and {psi_n.shape} differ")
    nm, nn = np.linalg.norm(psi_m), np.linalg.norm(psi_n)
    if nm == 0 or nn == 0:
        raise ZeroVector("cosine distance undefined for a zero vector")
    return float(np.clip(1.0 - psi_m @ psi_n / (nm * nn), 0.0, 2.0))


@dataclass
class EigenPath:
    indices: np.ndarray
    values: np.ndarray

    @property
    def start(self):
        return self.values[0]

    @property
    def end(self):
        return self.values[-1]


@dataclass
class ExchangeReport:
    paths: list
    exchanging_pairs: list
    closure_tolerance: float
    kappas: np.ndarray = field(repr=False, default=None)

    @property
    def closed_paths(self):
        used = {i for pair in self.exchanging_pairs for i in pair}
        return [i for i in range(len(self.paths)) if i not in used]

    def to_dict(self):
        return {
            "paths": [p.indices.tolist() for p in self.paths],
            "exchanging_pairs": [list(p) for p in self.exchanging_pairs],
            "closed_paths": self.closed_paths,
            "closure_tolerance": self.closure_tolerance,
        }


@dataclass(frozen=True)
class TrainingPair:
    """Eigenvalue pair at one parameter point, with ``p = (l1 - l2)**2`` and ``s = (l1 + l2)/2``."""

    kappa: complex
    lam1: complex
    lam2: complex

    @property
    def p(self):
        return (self.lam1 - self.lam2) ** 2

    @property
    def s(self):
        return 0.5 * (self.lam1 + self.lam2)

    @property
    def delta(self):
        return abs(self.lam1 - self.lam2)


def _feature_vectors(s, standardize):
    lam = s.spectra
    parts = [lam.real[..., None], lam.imag[..., None]]
    if s.features is not None:
        parts.append(s.features)
    psi = np.concatenate(parts, axis=-1)
    if standardize:
        sd = psi.reshape(-1, psi.shape[-1]).std(axis=0)
        psi = psi / np.where(sd > 0, sd, 1.0)
    return psi


def _distance_matrix(prev, cur, metric):
    """``d[a, b]`` = distance from previous point of path a to candidate b."""
    if metric == "euclidean":
        return np.abs(prev[:, None] - cur[None, :])
    num = prev @ cur.T
    norms = np.linalg.norm(prev, axis=1)[:, None] * np.linalg.norm(cur, axis=1)[None, :]
    if np.any(norms == 0):
        raise ZeroVector("zero feature vector in cosine grouping")
    return np.clip(1.0 - num / norms, 0.0, 2.0)


def _greedy(d):
    """Assign each row (path) a distinct column (candidate) by nearest neighbour.

    Contested candidates go to the closest path; losing paths are re-sorted
    over the remaining candidates.
    """
    n = d.shape[0]
    assign = -np.ones(n, dtype=int)
    free_rows = list(range(n))
    free_cols = set(range(n))
    while free_rows:
        cols = sorted(free_cols)
        sub = d[np.ix_(free_rows, cols)]
        for r, row in zip(free_rows, sub):
            if len(cols) > 1:
                two = np.partition(row, 1)[:2]
                if two[1] - two[0] <= TIE_TOL:
                    raise AmbiguousAssignment(f"path {r}: two continuations tie at distance {two[0]:.3e}")
        wanted = {}
        for k, r in enumerate(free_rows):
            wanted.setdefault(cols[int(np.argmin(sub[k]))], []).append(r)
        for c, rows in wanted.items():
            dist = np.array([d[r, c] for r in rows])
            order = np.argsort(dist)
            if len(rows) > 1 and dist[order[1]] - dist[order[0]] <= TIE_TOL:
                raise AmbiguousAssignment(f"candidate {c} equally close to paths {rows}")
            assign[rows[order[0]]] = c
            free_cols.discard(c)
        free_rows = [r for r in free_rows if assign[r] < 0]
    return assign


def _matching(d):
    rows, cols = linear_sum_assignment(d)
    assign = np.empty(d.shape[0], dtype=int)
    assign[rows] = cols
    return assign


def _seed_order(spectrum):
    # sort by real part, ties by imaginary part
    return np.lexsort((spectrum.imag, spectrum.real))


def group_paths(s, metric="euclidean", matching="greedy", closure_tolerance=None,
                standardize=False, check_resolution=True):
    """Sort the spectra of an :class:`OrbitSpectrumSet` into paths.

    Parameters
    ----------
    metric : {"euclidean", "cosine"}
        Distance between consecutive points. ``cosine`` compares vectors
        ``(Re lam, Im lam, features...)``.
    matching : {"greedy", "optimal"}
        ``optimal`` replaces the greedy rule by a minimum-cost assignment
        at each step.
    closure_tolerance : float, optional
        Endpoint tolerance; defaults to ten times the median step length.
    check_resolution : bool
        Raise :class:`TooSparse` when an assigned eigenvalue is closer to
        another path's previous point than to its own.
    """
    if s.n_points < 8:
        raise ValueError("need at least 8 orbit points")
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "cosine" and s.features is None and not standardize:
        log.warning("cosine grouping without features uses only (Re, Im) of the eigenvalues")
    assign_fn = _greedy if matching == "greedy" else _matching
    spectra = s.spectra
    points = spectra if metric == "euclidean" else _feature_vectors(s, standardize)
    n, dim = spectra.shape

    idx = np.empty((n, dim), dtype=int)
    idx[0] = _seed_order(spectra[0])
    for i in range(1, n + 1):
        prev = points[i - 1][idx[i - 1]]
        cur = points[i % n]
        d = _distance_matrix(prev, cur, metric)
        assign = assign_fn(d)
        if check_resolution:
            own = d[np.arange(dim), assign]
            # distance of each assigned candidate to every previous path point
            cross = d[:, assign]
            if np.any(cross.min(axis=0) < own - TIE_TOL):
                raise TooSparse(f"step {i - 1}->{i % n}: orbit under-resolved, increase n_points")
        if i < n:
            idx[i] = assign
        else:
            wrap = assign

    values = np.take_along_axis(spectra, idx, axis=1)
    paths = [EigenPath(idx[:, j].copy(), values[:, j].copy()) for j in range(dim)]

    steps = np.abs(np.diff(values, axis=0))
    if closure_tolerance is None:
        closure_tolerance = 10.0 * float(np.median(steps)) if steps.size else 0.0

    # wrap[a] is the angle-0 spectrum index path a continues into
    start_of = {int(idx[0, j]): j for j in range(dim)}
    pairs = []
    for a in range(dim):
        b = start_of[int(wrap[a])]
        if b <= a:
            continue
        pa, pb = paths[a], paths[b]
        if start_of[int(wrap[b])] != a:
            log.info("paths %d and %d belong to a longer cycle; not reported", a, b)
            continue
        ok = (abs(pa.end - pb.start) <= closure_tolerance
              and abs(pb.end - pa.start) <= closure_tolerance
              and abs(pa.end - pa.start) > closure_tolerance)
        if ok:
            pairs.append((a, b))
        else:
            log.warning("paths %d and %d swap under continuation but fail the closure tolerance", a, b)
    return ExchangeReport(paths, pairs, closure_tolerance, kappas=s.kappas.copy())


def subsample_indices(n_points, subsample):
    return (np.arange(subsample) * n_points) // subsample


def extract_training_set(report, pair_index=0, subsample=20, kappas=None):
    """Evenly spaced :class:`TrainingPair` list from one exchanging pair.

    ``pair_index`` indexes ``report.exchanging_pairs``; a ``(a, b)`` tuple of
    path indices is also accepted.
    """
    if isinstance(pair_index, tuple):
        a, b = pair_index
        if (a, b) not in report.exchanging_pairs and (b, a) not in report.exchanging_pairs:
            raise NotExchanging(f"paths {a} and {b} do not exchange")
    else:
        if not 0 <= pair_index < len(report.exchanging_pairs):
            raise NotExchanging(f"no exchanging pair with index {pair_index}")
        a, b = report.exchanging_pairs[pair_index]
    kappas = report.kappas if kappas is None else np.asarray(kappas)
    n = len(kappas)
    if not 8 <= subsample <= n:
        raise ValueError(f"subsample must lie in [8, {n}]")
    va, vb = report.paths[a].values, report.paths[b].values
    return [TrainingPair(complex(kappas[i]), complex(va[i]), complex(vb[i]))
            for i in subsample_indices(n, subsample)]
