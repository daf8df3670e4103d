"""Dense linear algebra for small matrices.

The complex eigensolver delegates to LAPACK ``zgeev`` (balancing, Hessenberg
reduction, shifted QR), which is the standard algorithm for non-normal
matrices such as the complex-symmetric families used here.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, DimensionMismatch, NonFinite, NotPositiveDefinite

MAX_DIM = 64

# relative jitters tried in order, in units of the mean diagonal
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    residual_norm: float = 0.0


def _square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{name} has non-finite entries")
    return m


def is_symmetric(m, rtol=1e-12):
    """True if ``m`` equals its (non-conjugated) transpose up to ``rtol * max(1, |m|_max)``."""
    m = np.asarray(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.all(np.abs(m - m.T) <= rtol * scale))


def eigendecompose(m, want_vectors=False):
    """Eigenvalues (and optionally right eigenvectors) of a general complex matrix.

    Eigenvalue order is whatever LAPACK returns. When vectors are requested,
    they are normalized to unit 2-norm and ``residual_norm`` is
    ``max_j |M v_j - lambda_j v_j|``.
    """
    m = _square(m).astype(complex, copy=False)
    n = m.shape[0]
    if n < 2:
        raise DimensionMismatch("need dim >= 2")
    if n > MAX_DIM:
        raise DimensionMismatch(f"dim {n} exceeds supported maximum {MAX_DIM}")
    try:
        if want_vectors:
            w, v = scipy.linalg.eig(m, right=True, check_finite=False)
        else:
            w = scipy.linalg.eigvals(m, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise ConvergenceFailure("QR iteration produced non-finite eigenvalues")
    if not want_vectors:
        return EigenDecomposition(eigenvalues=w)
    v = v / np.linalg.norm(v, axis=0)
    residual = float(np.max(np.linalg.norm(m @ v - v * w, axis=0)))
    return EigenDecomposition(eigenvalues=w, eigenvectors=v, residual_norm=residual)


def cholesky_spd(a, jitter=0.0):
    """Lower Cholesky factor of ``a + jitter * I``.

    Raises NotPositiveDefinite instead of returning the factor of an
    indefinite matrix.
    """
    a = _square(a)
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    if jitter:
        a = a + jitter * np.eye(a.shape[0])
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"matrix not positive definite (jitter={jitter:g})") from exc


def jittered_cholesky(a, ladder=JITTER_LADDER, extended=False):
    """Try :func:`cholesky_spd` (or :func:`cholesky_extended`) with increasing jitter.

    Returns ``(L, jitter)`` for the first rung that succeeds.
    """
    a = _square(a)
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    scale = scale if scale > 0 else 1.0
    for rel in ladder:
        try:
            if extended:
                jit = a + np.asarray(rel * scale, dtype=a.dtype) * np.eye(a.shape[0], dtype=a.dtype)
                return cholesky_extended(jit), rel * scale
            return cholesky_spd(a, rel * scale), rel * scale
        except NotPositiveDefinite:
            continue
    raise NotPositiveDefinite(
        f"not positive definite even with jitter {ladder[-1] * scale:g}; "
        "check for duplicate or degenerate inputs"
    )


def cholesky_extended(a):
    """Lower Cholesky factor computed in ``np.longdouble``.

    Slow (one vectorized step per column) but adequate for the small
    covariance matrices of GP surrogates.
    """
    a = np.asarray(_square(a), dtype=np.longdouble)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0:
            raise NotPositiveDefinite(f"leading minor {j + 1} not positive in extended precision")
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_triangular_extended(L, b, trans=False):
    """Solve ``L x = b`` (or ``L^T x = b``) for lower-triangular ``L`` in ``np.longdouble``."""
    L = np.asarray(L, dtype=np.longdouble)
    b = np.asarray(b, dtype=np.longdouble)
    n = L.shape[0]
    x = np.zeros_like(b)
    if not trans:
        for i in range(n):
            x[i] = (b[i] - L[i, :i] @ x[:i]) / L[i, i]
    else:
        for i in range(n - 1, -1, -1):
            x[i] = (b[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def min_eigenvalue_spd(a):
    """Smallest eigenvalue of a symmetric positive definite matrix.

    Computed as ``sigma_min(L)**2`` with ``L`` the extended-precision
    Cholesky factor. A float64 eigensolver has absolute error of order
    ``n * eps * |a|``, which swamps small eigenvalues of ill-conditioned
    kernel matrices; the squared singular value of the factor is accurate
    to roughly ``sqrt(eps * cond)`` relative instead. Pass ``a`` as
    ``np.longdouble`` to avoid rounding its entries first. Falls back to
    the float64 eigensolver if the factorization fails.
    """
    try:
        L = cholesky_extended(a)
    except NotPositiveDefinite:
        return float(symmetric_eigenvalues(np.asarray(a, dtype=float))[0])
    sv = np.linalg.svd(L.astype(float), compute_uv=False)
    return float(sv[-1]) ** 2


def symmetric_eigenvalues(a):
    """Ascending eigenvalues of a real symmetric matrix."""
    a = _square(a)
    if np.iscomplexobj(a):
        raise TypeError("expected a real symmetric matrix")
    return np.linalg.eigvalsh(a)
