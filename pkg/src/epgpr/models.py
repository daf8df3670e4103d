"""Parameter-dependent matrix families, orbits and orbit spectra."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EPError, NonFinite, ParseError, SolverError, SymmetryViolation
from .linalg import eigendecompose, is_symmetric

MIN_ORBIT_POINTS = 8

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Minimal splitmix64 generator; identical streams on every platform."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, low=0.0, high=1.0):
        # top 53 bits -> [0, 1)
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u


@dataclass(frozen=True)
class MatrixFamily:
    """``M(kappa) = base + kappa * C`` where C has ones at the coupling positions."""

    kind: str
    base: np.ndarray
    coupling: tuple
    seed: Optional[int] = None
    symmetric: bool = True

    @property
    def dim(self):
        return self.base.shape[0]

    def __call__(self, kappa):
        return evaluate_family(self, kappa)


def evaluate_family(family, kappa):
    kappa = complex(kappa)
    if not (np.isfinite(kappa.real) and np.isfinite(kappa.imag)):
        raise NonFinite(f"kappa={kappa} is not finite")
    m = family.base.copy()
    for i, j in family.coupling:
        m[i, j] += kappa
    return m


def kato2():
    """The 2x2 family [[1, k], [k, -1]] with EPs at k = +-i."""
    base = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    return MatrixFamily("kato2", base, ((0, 1), (1, 0)), symmetric=True)


def random5(seed=42):
    """Complex-symmetric 5x5 family with random entries outside the upper-left block.

    ``M[0,0] = 1``, ``M[1,1] = -1`` and ``M[0,1] = M[1,0] = kappa``. Every
    other upper-triangle entry (column index >= 2) gets real and imaginary
    parts drawn uniformly from [-1, 1], column by column, real part first.
    """
    rng = SplitMix64(seed)
    base = np.zeros((5, 5), dtype=complex)
    base[0, 0] = 1.0
    base[1, 1] = -1.0
    for j in range(2, 5):
        for i in range(j + 1):
            re = rng.uniform(-1.0, 1.0)
            im = rng.uniform(-1.0, 1.0)
            base[i, j] = base[j, i] = complex(re, im)
    return MatrixFamily("random5", base, ((0, 1), (1, 0)), seed=int(seed), symmetric=True)


def family_to_dict(family):
    rows = [[float(z.real), float(z.imag)] for z in family.base.ravel()]
    return {
        "dim": family.dim,
        "symmetric": bool(family.symmetric),
        "base": rows,
        "coupling": [list(map(int, c)) for c in family.coupling],
    }


def family_from_dict(data):
    for key in ("dim", "base", "coupling"):
        if key not in data:
            raise ParseError("missing field", where=key)
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 2:
        raise ParseError(f"expected integer >= 2, got {dim!r}", where="dim")
    base = data["base"]
    if not isinstance(base, list) or len(base) != dim * dim:
        n = len(base) if isinstance(base, list) else type(base).__name__
        raise ParseError(f"expected {dim * dim} entries for a {dim}x{dim} matrix, got {n}", where="base")
    entries = []
    for k, pair in enumerate(base):
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise ParseError(f"expected [re, im], got {pair!r}", where=f"base[{k}]")
        try:
            entries.append(complex(float(pair[0]), float(pair[1])))
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), where=f"base[{k}]") from exc
    m = np.array(entries, dtype=complex).reshape(dim, dim)
    if not np.all(np.isfinite(m)):
        raise ParseError("non-finite entry", where="base")
    coupling = []
    for k, c in enumerate(data["coupling"]):
        if not (isinstance(c, (list, tuple)) and len(c) == 2 and all(isinstance(i, int) for i in c)):
            raise ParseError(f"expected [i, j], got {c!r}", where=f"coupling[{k}]")
        if not all(0 <= i < dim for i in c):
            raise ParseError(f"position {c} outside {dim}x{dim}", where=f"coupling[{k}]")
        coupling.append(tuple(c))
    symmetric = bool(data.get("symmetric", False))
    if symmetric:
        if not is_symmetric(m):
            raise SymmetryViolation("declared symmetric but base is not")
        if set(coupling) != {(j, i) for i, j in coupling}:
            raise SymmetryViolation("declared symmetric but coupling positions are not")
    return MatrixFamily("user", m, tuple(coupling), symmetric=symmetric)


def load_family_from_file(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, where=f"line {exc.lineno}") from exc
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", where="line 1")
    return family_from_dict(data)


@dataclass(frozen=True)
class Orbit:
    """Closed loop ``kappa(phi) = center + radius_re*cos(phi) + i*radius_im*sin(phi)``.

    A scalar ``radius`` gives a circle.
    """

    center: complex
    radius: object = 0.5
    n_points: int = 100

    def __post_init__(self):
        if self.n_points < MIN_ORBIT_POINTS:
            raise ValueError(f"n_points must be >= {MIN_ORBIT_POINTS}, got {self.n_points}")
        re, im = self.semi_axes
        if re <= 0 or im <= 0:
            raise ValueError("radius must be positive")

    @property
    def semi_axes(self):
        if np.ndim(self.radius) == 0:
            return float(self.radius), float(self.radius)
        re, im = self.radius
        return float(re), float(im)

    @property
    def angles(self):
        return 2 * np.pi * np.arange(self.n_points) / self.n_points

    @property
    def kappas(self):
        re, im = self.semi_axes
        phi = self.angles
        return complex(self.center) + re * np.cos(phi) + 1j * im * np.sin(phi)


@dataclass(frozen=True)
class ParameterMap:
    """Affine map between the unit-circle plane and two physical controls.

    ``forward(kappa) = (c1 * (1 + rho * Re kappa), c2 * (1 + rho * Im kappa))``
    """

    center: tuple
    relative_radius: float

    def forward(self, kappa):
        c1, c2 = self.center
        kappa = np.asarray(kappa, dtype=complex)
        return c1 * (1 + self.relative_radius * kappa.real), c2 * (1 + self.relative_radius * kappa.imag)

    def backward(self, x1, x2):
        c1, c2 = self.center
        re = (np.asarray(x1, dtype=float) / c1 - 1) / self.relative_radius
        im = (np.asarray(x2, dtype=float) / c2 - 1) / self.relative_radius
        return re + 1j * im

    @property
    def deltas(self):
        """Semi-axes of the physical ellipse, ``(rho * c1, rho * c2)``."""
        c1, c2 = self.center
        return self.relative_radius * c1, self.relative_radius * c2


@dataclass
class OrbitSpectrumSet:
    """Full spectra along a closed loop, one row per parameter point."""

    kappas: np.ndarray
    spectra: np.ndarray
    features: Optional[np.ndarray] = None
    orbit: Optional[Orbit] = field(default=None, compare=False)

    def __post_init__(self):
        self.kappas = np.asarray(self.kappas, dtype=complex)
        self.spectra = np.asarray(self.spectra, dtype=complex)
        if self.spectra.ndim != 2 or self.spectra.shape[0] != self.kappas.shape[0]:
            raise ValueError("spectra must have shape (n_points, dim)")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=float)
            if self.features.ndim != 3 or self.features.shape[:2] != self.spectra.shape:
                raise ValueError("features must have shape (n_points, dim, M)")

    @property
    def n_points(self):
        return self.spectra.shape[0]

    @property
    def dim(self):
        return self.spectra.shape[1]

    def to_dict(self):
        out = {
            "kappa": [[z.real, z.imag] for z in self.kappas.tolist()],
            "spectra": [[[z.real, z.imag] for z in row] for row in self.spectra.tolist()],
        }
        if self.features is not None:
            out["features"] = self.features.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            kappas = [complex(re, im) for re, im in data["kappa"]]
            spectra = [[complex(re, im) for re, im in row] for row in data["spectra"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed spectrum file: {exc}") from exc
        if len({len(row) for row in spectra}) > 1:
            raise ParseError("spectra rows differ in length", where="spectra")
        features = data.get("features")
        try:
            return cls(kappas, spectra, None if features is None else np.asarray(features, dtype=float))
        except ValueError as exc:
            raise ParseError(str(exc)) from exc


def state_features(vectors):
    """Per-eigenvector basis admixtures ``|v_k|^2`` (columns are eigenvectors)."""
    w = np.abs(vectors) ** 2
    return (w / w.sum(axis=0)).T


def _spectrum_at(family, kappa, index, features):
    try:
        dec = eigendecompose(evaluate_family(family, kappa), want_vectors=features)
    except EPError as exc:
        raise SolverError(str(exc), index=index) from exc
    return dec.eigenvalues, (state_features(dec.eigenvectors) if features else None)


def trace_orbit(family, orbit, features=False, jobs=1):
    """Diagonalize ``family`` at every orbit point, in angle order."""
    kappas = orbit.kappas
    tasks = [(family, k, i, features) for i, k in enumerate(kappas)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _spectrum_at(*t), tasks))
    else:
        results = [_spectrum_at(*t) for t in tasks]
    spectra = np.array([r[0] for r in results])
    feats = np.array([r[1] for r in results]) if features else None
    return OrbitSpectrumSet(kappas, spectra, feats, orbit=orbit)
