"""L1 solvers behind the self-expressive similarity graphs and KSVD coding.

Two entry points learn sparse codes over the kernel coordinates
``k_bar_i`` (columns of ``K_half``):

* :func:`local_sparse_codes` solves one lasso per point with the point's own
  column excluded,
* :func:`global_sparse_codes` solves the matching matrix program for all
  columns jointly with a zero-diagonal constraint.

Both relax the exact self-expression equality to penalized least squares
``min 1/2 ||A x - b||^2 + lam ||x||_1`` solved by ADMM with residual
balancing.  The zero constraints (the excluded coordinate, the diagonal) are
enforced on the sparse iterate at every step, so returned codes carry
bitwise zeros there.

:func:`omp` is the greedy T0-sparse coder used by dictionary learning.
"""

from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from spdps.kernel_space import KernelGram

__all__ = [
    "LassoResult",
    "SparseCodes",
    "lasso_admm",
    "default_code_penalty",
    "local_sparse_codes",
    "global_sparse_codes",
    "omp",
]

ADMM_MAX_ITER = 2000
ADMM_ABS_TOL = 1e-8
ADMM_REL_TOL = 1e-6
# Residual balancing: rescale rho when primal/dual residuals drift apart.
BALANCE_RATIO = 10.0


class LassoResult(NamedTuple):
    code: np.ndarray
    converged: bool
    iterations: int


def _soft_threshold(v, kappa):
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def lasso_admm(
    A,
    b,
    lam: float,
    exclude: int | None = None,
    max_iter: int = ADMM_MAX_ITER,
    abs_tol: float = ADMM_ABS_TOL,
    rel_tol: float = ADMM_REL_TOL,
) -> LassoResult:
    """Solve ``min 1/2 ||A x - b||^2 + lam ||x||_1`` by scaled-dual ADMM.

    ``exclude`` pins one coordinate to exactly zero throughout (used for the
    self-expression constraint that a point may not reconstruct itself).
    Returns the sparse iterate, which carries exact zeros, together with a
    convergence flag; hitting ``max_iter`` leaves the flag false rather than
    raising.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValueError(f"A is {A.shape}, b has length {b.size}")
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    q = A.shape[1]
    if exclude is not None and not 0 <= exclude < q:
        raise IndexError(f"exclude index {exclude} out of range for {q} columns")

    ata = A.T @ A
    atb = A.T @ b
    rho = 1.0
    factor = cho_factor(ata + rho * np.eye(q))
    x = np.zeros(q)
    z = np.zeros(q)
    u = np.zeros(q)
    sqrt_q = np.sqrt(q)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        x = cho_solve(factor, atb + rho * (z - u))
        z_old = z
        z = _soft_threshold(x + u, lam / rho)
        if exclude is not None:
            z[exclude] = 0.0
        u = u + x - z

        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        eps_pri = sqrt_q * abs_tol + rel_tol * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = sqrt_q * abs_tol + rel_tol * rho * np.linalg.norm(u)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

        if r_norm > BALANCE_RATIO * s_norm:
            rho *= 2.0
            u /= 2.0
            factor = cho_factor(ata + rho * np.eye(q))
        elif s_norm > BALANCE_RATIO * r_norm:
            rho /= 2.0
            u *= 2.0
            factor = cho_factor(ata + rho * np.eye(q))

    return LassoResult(code=z, converged=converged, iterations=iteration)


@dataclasses.dataclass(frozen=True)
class SparseCodes:
    """Self-expressive codes of a training set; column i codes point i.

    ``tau`` is the downstream graph threshold, defaulting to
    ``1e-6 * max|codes|``.  ``converged`` records the per-column solver flag.
    """

    mode: str
    codes: np.ndarray
    tau: float
    converged: np.ndarray

    def __post_init__(self):
        if self.mode not in ("local", "global"):
            raise ValueError(f"mode must be 'local' or 'global', got {self.mode!r}")
        c = np.asarray(self.codes, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"codes must be square, got shape {c.shape}")
        if np.any(np.diag(c) != 0.0):
            raise ValueError("codes must have an exactly zero diagonal")
        if self.tau < 0.0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        flags = np.asarray(self.converged, dtype=bool)
        if flags.shape != (c.shape[0],):
            raise ValueError("one convergence flag per column required")
        c.flags.writeable = False
        flags.flags.writeable = False
        object.__setattr__(self, "codes", c)
        object.__setattr__(self, "converged", flags)

    @property
    def n(self) -> int:
        return self.codes.shape[0]


def default_code_penalty(gram: KernelGram) -> float:
    """Default lasso penalty: 1e-2 times the largest kernel-coordinate norm."""
    return 1e-2 * float(np.max(np.linalg.norm(gram.K_half, axis=0)))


def _default_tau(codes: np.ndarray) -> float:
    peak = float(np.max(np.abs(codes))) if codes.size else 0.0
    return 1e-6 * peak


def local_sparse_codes(
    gram: KernelGram,
    lam: float | None = None,
    max_iter: int = ADMM_MAX_ITER,
    abs_tol: float = ADMM_ABS_TOL,
    rel_tol: float = ADMM_REL_TOL,
) -> SparseCodes:
    """Code each kernel coordinate against all the others, one lasso per point.

    Column i solves ``min 1/2 ||K_half x - k_bar_i||^2 + lam ||x||_1`` with
    coordinate i pinned to zero.
    """
    if gram.n < 3:
        raise ValueError(f"need at least 3 points, got {gram.n}")
    if lam is None:
        lam = default_code_penalty(gram)
    n = gram.n
    codes = np.zeros((n, n))
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        result = lasso_admm(
            gram.K_half, gram.K_half[:, i], lam, exclude=i,
            max_iter=max_iter, abs_tol=abs_tol, rel_tol=rel_tol,
        )
        codes[:, i] = result.code
        flags[i] = result.converged
    return SparseCodes(mode="local", codes=codes, tau=_default_tau(codes), converged=flags)


def global_sparse_codes(
    gram: KernelGram,
    lam: float | None = None,
    max_iter: int = ADMM_MAX_ITER,
    abs_tol: float = ADMM_ABS_TOL,
    rel_tol: float = ADMM_REL_TOL,
) -> SparseCodes:
    """Solve the joint matrix program over all columns at once.

    ``min 1/2 ||K_half - K_half G||_F^2 + lam ||G||_1  s.t.  diag(G) = 0``.
    The program is column-separable, so its solution matches
    :func:`local_sparse_codes` column by column; it is solved here as one
    matrix-valued ADMM with a shared penalty parameter.
    """
    if gram.n < 3:
        raise ValueError(f"need at least 3 points, got {gram.n}")
    if lam is None:
        lam = default_code_penalty(gram)
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    a = gram.K_half
    n = gram.n
    ata = a.T @ a
    atb = ata  # design matrix and targets coincide
    rho = 1.0
    factor = cho_factor(ata + rho * np.eye(n))
    x = np.zeros((n, n))
    z = np.zeros((n, n))
    u = np.zeros((n, n))
    converged = False
    for _ in range(max_iter):
        x = cho_solve(factor, atb + rho * (z - u))
        z_old = z
        z = _soft_threshold(x + u, lam / rho)
        np.fill_diagonal(z, 0.0)
        u = u + x - z

        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        eps_pri = n * abs_tol + rel_tol * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = n * abs_tol + rel_tol * rho * np.linalg.norm(u)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

        if r_norm > BALANCE_RATIO * s_norm:
            rho *= 2.0
            u /= 2.0
            factor = cho_factor(ata + rho * np.eye(n))
        elif s_norm > BALANCE_RATIO * r_norm:
            rho /= 2.0
            u *= 2.0
            factor = cho_factor(ata + rho * np.eye(n))

    flags = np.full(n, converged, dtype=bool)
    return SparseCodes(mode="global", codes=z, tau=_default_tau(z), converged=flags)


def omp(D, y, T0: int) -> np.ndarray:
    """Orthogonal matching pursuit: greedy T0-sparse code of y over atoms D.

    Columns of D must be unit-norm.  At each step the atom most correlated
    with the residual joins the active set (exact ties go to the lower
    index) and coefficients are refit by least squares, leaving the residual
    orthogonal to every selected atom.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if D.ndim != 2 or D.shape[0] != y.size:
        raise ValueError(f"D is {D.shape}, y has length {y.size}")
    m, q = D.shape
    norms = np.linalg.norm(D, axis=0)
    if np.max(np.abs(norms - 1.0)) > 1e-10:
        raise ValueError("columns of D must be unit-norm")
    if not 1 <= T0 <= min(m, q):
        raise ValueError(f"T0 must be in [1, {min(m, q)}], got {T0}")

    code = np.zeros(q)
    y_norm = np.linalg.norm(y)
    if y_norm == 0.0:
        return code
    residual = y.copy()
    active: list[int] = []
    coeffs = np.zeros(0)
    for _ in range(T0):
        if np.linalg.norm(residual) <= 1e-12 * y_norm:
            break
        corr = np.abs(D.T @ residual)
        corr[active] = -1.0
        pick = int(np.argmax(corr))
        active.append(pick)
        sub = D[:, active]
        coeffs, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ coeffs
    code[active] = coeffs
    return code
