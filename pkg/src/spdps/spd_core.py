"""Geometry, divergence, and kernel primitives on symmetric positive definite matrices.

The manifold point type is :class:`SpdMatrix`, a validated immutable wrapper
around a dense numpy array.  Tangent vectors are plain symmetric arrays.
Spectral matrix functions (log, exp, square root) go through one symmetric
eigendecomposition helper and symmetrize their output as ``(M + M.T) / 2`` so
round-trip identities hold at tight tolerance.

Scalar similarity functions:

* ``geodesic_distance(X, Y) = sqrt(trace(logm^2(X^{-1/2} Y X^{-1/2})))``
* ``stein_divergence(X, Y) = logdet((X + Y) / 2) - logdet(X Y) / 2``
* ``stein_kernel(X, Y, sigma) = exp(-sigma * stein_divergence(X, Y))``

Log-determinants are computed from Cholesky factors, never from explicit
determinants, which keeps them finite for dimensions well past where
``det`` overflows.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = [
    "SYMMETRY_RTOL",
    "PD_RTOL",
    "SymmetryError",
    "PositiveDefiniteError",
    "DimensionMismatchError",
    "SpdMatrix",
    "as_spd_array",
    "require_symmetric",
    "sym_eig",
    "spd_logm",
    "spd_expm",
    "spd_sqrt",
    "airm_log",
    "airm_exp",
    "geodesic_distance",
    "stein_divergence",
    "stein_kernel",
    "logdet_pd",
    "regularize",
]

# Relative tolerance for symmetry checks: |M - M.T| <= rtol * max|M|.
SYMMETRY_RTOL = 1e-12

# An eigenvalue counts as positive only above this fraction of the largest.
PD_RTOL = 1e-10


class SymmetryError(ValueError):
    """A matrix required to be symmetric is not."""


class PositiveDefiniteError(ValueError):
    """A matrix required to be positive definite is not."""


class DimensionMismatchError(ValueError):
    """Operands have incompatible dimensions."""


def require_symmetric(matrix, rtol: float = SYMMETRY_RTOL, name: str = "matrix") -> np.ndarray:
    """Validate symmetry of a square matrix and return it as a float array.

    Raises :class:`SymmetryError` when ``|M - M.T|`` exceeds ``rtol`` times
    the largest absolute entry.  The zero matrix passes.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {m.shape}")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    gap = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if gap > rtol * scale:
        raise SymmetryError(
            f"{name} is not symmetric: max|M - M.T| = {gap:.3e} "
            f"exceeds {rtol:.1e} * max|M| = {rtol * scale:.3e}"
        )
    return m


def as_spd_array(point, name: str = "matrix") -> np.ndarray:
    """Return the dense array behind an :class:`SpdMatrix` or array-like input.

    An :class:`SpdMatrix` is trusted (validated at construction); raw arrays
    are checked for squareness and symmetry.  Positive definiteness of raw
    arrays is enforced where the factorizations happen.
    """
    if isinstance(point, SpdMatrix):
        return point.entries
    return require_symmetric(point, name=name)


@dataclasses.dataclass(frozen=True)
class SpdMatrix:
    """A d x d symmetric positive definite matrix, immutable after construction.

    Construction validates symmetry (relative tolerance ``SYMMETRY_RTOL``) and
    positive definiteness: the smallest eigenvalue must exceed
    ``PD_RTOL`` times the largest.  Inputs below that floor are rejected;
    fix them with :func:`regularize` first.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = require_symmetric(self.entries, name="SpdMatrix entries")
        w = np.linalg.eigvalsh(m)
        if w[-1] <= 0.0 or w[0] <= PD_RTOL * w[-1]:
            raise PositiveDefiniteError(
                f"matrix is not positive definite: smallest eigenvalue "
                f"{w[0]:.6e} (largest {w[-1]:.6e})"
            )
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.entries.astype(dtype)
        return self.entries


def _symmetrize(m: np.ndarray) -> np.ndarray:
    # Kills the floating-point drift that products of eigenvector matrices pick up.
    return (m + m.T) / 2.0


def sym_eig(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``matrix = V @ diag(w) @ V.T`` and orthonormal
    columns in ``V``.  Rejects non-symmetric input.
    """
    m = as_spd_array(matrix, name="sym_eig input")
    w, v = np.linalg.eigh(m)
    return w[::-1].copy(), v[:, ::-1].copy()


def _eig_pd(m: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """eigh plus a positive definiteness check (ascending eigenvalues)."""
    w, v = np.linalg.eigh(m)
    if w[-1] <= 0.0 or w[0] <= PD_RTOL * w[-1]:
        raise PositiveDefiniteError(
            f"{name} requires a positive definite matrix: smallest eigenvalue "
            f"{w[0]:.6e} (largest {w[-1]:.6e})"
        )
    return w, v


def spd_logm(point) -> np.ndarray:
    """Matrix logarithm of a positive definite matrix (symmetric output)."""
    m = as_spd_array(point, name="spd_logm input")
    w, v = _eig_pd(m, "spd_logm")
    return _symmetrize((v * np.log(w)) @ v.T)


def spd_expm(matrix) -> SpdMatrix:
    """Matrix exponential of a symmetric matrix; the result is positive definite."""
    m = require_symmetric(matrix, name="spd_expm input")
    w, v = np.linalg.eigh(m)
    return SpdMatrix(_symmetrize((v * np.exp(w)) @ v.T))


def spd_sqrt(point) -> SpdMatrix:
    """Principal square root of a positive definite matrix."""
    m = as_spd_array(point, name="spd_sqrt input")
    w, v = _eig_pd(m, "spd_sqrt")
    return SpdMatrix(_symmetrize((v * np.sqrt(w)) @ v.T))


def _sqrt_pair(m: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Square root and inverse square root from one eigendecomposition."""
    w, v = _eig_pd(m, name)
    s = np.sqrt(w)
    return _symmetrize((v * s) @ v.T), _symmetrize((v / s) @ v.T)


def _require_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")


def airm_log(pole, point) -> np.ndarray:
    """Map a manifold point into the tangent space at ``pole``.

    Returns the symmetric matrix
    ``pole^{1/2} logm(pole^{-1/2} point pole^{-1/2}) pole^{1/2}``.
    """
    x = as_spd_array(pole, name="airm_log pole")
    y = as_spd_array(point, name="airm_log point")
    _require_same_dim(x, y)
    root, inv_root = _sqrt_pair(x, "airm_log pole")
    inner = _symmetrize(inv_root @ y @ inv_root)
    w, v = _eig_pd(inner, "airm_log point")
    log_inner = (v * np.log(w)) @ v.T
    return _symmetrize(root @ log_inner @ root)


def airm_exp(pole, tangent) -> SpdMatrix:
    """Map a symmetric tangent matrix at ``pole`` back onto the manifold.

    Inverse of :func:`airm_log`:
    ``pole^{1/2} expm(pole^{-1/2} tangent pole^{-1/2}) pole^{1/2}``.
    """
    x = as_spd_array(pole, name="airm_exp pole")
    s = require_symmetric(tangent, name="airm_exp tangent")
    _require_same_dim(x, s)
    root, inv_root = _sqrt_pair(x, "airm_exp pole")
    inner = _symmetrize(inv_root @ s @ inv_root)
    w, v = np.linalg.eigh(inner)
    exp_inner = (v * np.exp(w)) @ v.T
    return SpdMatrix(_symmetrize(root @ exp_inner @ root))


def geodesic_distance(point_a, point_b) -> float:
    """Length of the shortest manifold path between two points.

    ``sqrt(trace(logm^2(A^{-1/2} B A^{-1/2})))``; symmetric in its arguments
    and invariant under congruence transforms ``X -> M.T X M``.
    """
    a = as_spd_array(point_a, name="geodesic_distance first argument")
    b = as_spd_array(point_b, name="geodesic_distance second argument")
    _require_same_dim(a, b)
    _, inv_root = _sqrt_pair(a, "geodesic_distance first argument")
    inner = _symmetrize(inv_root @ b @ inv_root)
    w, _ = _eig_pd(inner, "geodesic_distance second argument")
    return float(math.sqrt(np.sum(np.log(w) ** 2)))


def logdet_pd(point, name: str = "matrix") -> float:
    """log(det(M)) for a positive definite matrix, via its Cholesky factor."""
    m = np.asarray(point.entries if isinstance(point, SpdMatrix) else point, dtype=float)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise PositiveDefiniteError(f"{name} is not positive definite: {exc}") from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def stein_divergence(point_a, point_b) -> float:
    """Symmetric log-det divergence ``logdet((A+B)/2) - logdet(A B)/2``.

    Much cheaper than :func:`geodesic_distance` (three Cholesky
    factorizations, no eigendecomposition).  Nonnegative, zero only for
    equal arguments.
    """
    a = as_spd_array(point_a, name="stein_divergence first argument")
    b = as_spd_array(point_b, name="stein_divergence second argument")
    _require_same_dim(a, b)
    mid = logdet_pd((a + b) / 2.0, name="midpoint (A+B)/2")
    div = mid - 0.5 * (logdet_pd(a, name="first argument") + logdet_pd(b, name="second argument"))
    # Roundoff can land a hair below zero for near-identical arguments.
    if -1e-10 < div < 0.0:
        return 0.0
    return div


def stein_kernel(point_a, point_b, sigma: float) -> float:
    """Kernel value ``exp(-sigma * stein_divergence(A, B))`` in ``(0, 1]``."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.exp(-sigma * stein_divergence(point_a, point_b))


def regularize(matrix, eps: float = 1e-6) -> SpdMatrix:
    """Lift a symmetric (typically rank-deficient covariance) matrix to the PD cone.

    When the smallest eigenvalue is at or below ``eps * trace / d`` the matrix
    is shifted by a multiple of the identity so the smallest eigenvalue lands
    at that floor; otherwise it is returned unchanged.  A non-positive trace
    (zero or indefinite input) falls back to a floor of ``eps`` itself.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    m = require_symmetric(matrix, name="regularize input")
    d = m.shape[0]
    floor = eps * float(np.trace(m)) / d
    if floor <= 0.0:
        floor = eps
    lam_min = float(np.linalg.eigvalsh(m)[0])
    if lam_min > floor:
        return SpdMatrix(m)
    shift = floor - min(lam_min, 0.0)
    return SpdMatrix(m + shift * np.eye(d))
