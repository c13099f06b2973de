"""Stein-kernel Gram matrices over a training set of SPD matrices.

A :class:`KernelGram` bundles the pairwise kernel matrix ``K``, its PSD
square root ``K_half`` (columns of which are the implicit coordinates
``k_bar_i`` every projection in :mod:`spdps.projection` is built from), the
bandwidth ``sigma``, and references to the training points so out-of-sample
kernel vectors can be formed later.

``sigma`` is admissible when it lies in ``{1/2, 2/2, ..., (n-1)/2}``; for
those values the kernel is positive definite and ``K_half`` is a genuine
square root.  Other bandwidths are accepted with a warning, and negative
Gram eigenvalues are clamped to zero when forming ``K_half``.
"""

from __future__ import annotations

import dataclasses
import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from spdps.spd_core import (
    DimensionMismatchError,
    SpdMatrix,
    stein_kernel,
    sym_eig,
)

__all__ = [
    "CLAMP_RTOL",
    "KernelGram",
    "validate_sigma",
    "admissible_sigmas",
    "gram",
    "kernel_vector",
    "worker_count",
]

# K_half eigenvalues below this fraction of the largest are treated as zero.
CLAMP_RTOL = 1e-12


def worker_count() -> int:
    """Worker cap for parallel sections, from ``SPD_DPS_THREADS`` when set."""
    raw = os.environ.get("SPD_DPS_THREADS")
    if raw is not None:
        n = int(raw)
        if n < 1:
            raise ValueError(f"SPD_DPS_THREADS must be >= 1, got {raw}")
        return n
    return min(os.cpu_count() or 1, 8)


def validate_sigma(sigma: float, n: int) -> bool:
    """True iff ``sigma`` is a positive-definiteness-guaranteeing bandwidth.

    The admissible set for ``n`` training points is the half-integer grid
    ``{1/2, 2/2, ..., (n-1)/2}``, checked within 1e-12.
    """
    if n < 2:
        raise ValueError(f"need at least 2 training points, got n={n}")
    if sigma <= 0.0:
        return False
    doubled = 2.0 * sigma
    nearest = round(doubled)
    return abs(doubled - nearest) <= 1e-12 and 1 <= nearest <= n - 1


def admissible_sigmas(n: int, cap: int = 10) -> list[float]:
    """Candidate bandwidths for model selection, largest set ``cap`` values.

    Returns the full admissible grid when it has at most ``cap`` members,
    otherwise a geometric subsample of it (always including 1/2 and
    (n-1)/2).
    """
    if n < 2:
        raise ValueError(f"need at least 2 training points, got n={n}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    count = n - 1
    if count <= cap:
        ks = np.arange(1, n)
    else:
        ks = np.unique(np.rint(np.geomspace(1, count, num=cap)).astype(int))
    return [k / 2.0 for k in ks]


@dataclasses.dataclass(frozen=True)
class KernelGram:
    """Pairwise Stein-kernel matrix with its PSD square root.

    ``training_refs`` may be ``None`` for instances restored from a cache
    file; attach the original points before calling :func:`kernel_vector`.
    """

    n: int
    sigma: float
    K: np.ndarray
    K_half: np.ndarray
    training_refs: tuple[SpdMatrix, ...] | None

    def __post_init__(self):
        k = np.asarray(self.K, dtype=float)
        k_half = np.asarray(self.K_half, dtype=float)
        if k.shape != (self.n, self.n) or k_half.shape != (self.n, self.n):
            raise DimensionMismatchError(
                f"K and K_half must be {self.n}x{self.n}, got {k.shape} and {k_half.shape}"
            )
        if np.max(np.abs(k - k.T)) > 1e-12:
            raise ValueError("K must be symmetric")
        if np.max(np.abs(np.diag(k) - 1.0)) > 1e-12:
            raise ValueError("K must have unit diagonal")
        if self.training_refs is not None and len(self.training_refs) != self.n:
            raise DimensionMismatchError(
                f"expected {self.n} training refs, got {len(self.training_refs)}"
            )
        for arr in (k, k_half):
            arr.flags.writeable = False
        object.__setattr__(self, "K", k)
        object.__setattr__(self, "K_half", k_half)

    @property
    def dim(self) -> int:
        if self.training_refs is None:
            raise ValueError("training references not attached")
        return self.training_refs[0].dim

    def with_refs(self, points) -> "KernelGram":
        """Copy of this Gram with training references attached."""
        refs = tuple(p if isinstance(p, SpdMatrix) else SpdMatrix(p) for p in points)
        return dataclasses.replace(self, training_refs=refs)


def _kernel_row(points, i, sigma, out):
    for j in range(i + 1, len(points)):
        out[i, j] = stein_kernel(points[i], points[j], sigma)


def gram(points, sigma: float = 0.5) -> KernelGram:
    """Assemble the Stein-kernel Gram matrix of a training set.

    ``K[i, j] = exp(-sigma * J(points[i], points[j]))`` with an exactly unit
    diagonal and exact symmetry.  ``K_half`` comes from the symmetric
    eigendecomposition with eigenvalues below ``CLAMP_RTOL`` times the
    largest clamped to zero, so it stays real PSD even for non-admissible
    bandwidths.  Warns when ``sigma`` is outside the admissible grid.
    """
    refs = tuple(p if isinstance(p, SpdMatrix) else SpdMatrix(p) for p in points)
    n = len(refs)
    if n < 2:
        raise ValueError(f"need at least 2 training points, got {n}")
    d = refs[0].dim
    for idx, p in enumerate(refs):
        if p.dim != d:
            raise DimensionMismatchError(
                f"training point {idx} has dim {p.dim}, expected {d}"
            )
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not validate_sigma(sigma, n):
        warnings.warn(
            f"sigma={sigma} is outside the admissible set for n={n}; "
            "the Gram matrix may be indefinite and will be clamped",
            stacklevel=2,
        )

    k = np.zeros((n, n))
    workers = worker_count()
    if workers > 1 and n >= 64:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda i: _kernel_row(refs, i, sigma, k), range(n - 1)))
    else:
        for i in range(n - 1):
            _kernel_row(refs, i, sigma, k)
    k = k + k.T
    np.fill_diagonal(k, 1.0)

    w, v = sym_eig(k)
    w = np.where(w > CLAMP_RTOL * max(w[0], 0.0), w, 0.0)
    k_half = (v * np.sqrt(w)) @ v.T
    k_half = (k_half + k_half.T) / 2.0
    return KernelGram(n=n, sigma=sigma, K=k, K_half=k_half, training_refs=refs)


def kernel_vector(query, gram: KernelGram) -> np.ndarray:
    """Kernel evaluations of a query point against the training set.

    Entry ``j`` is ``stein_kernel(query, training_refs[j], sigma)``.  For a
    query that is (bitwise) a training point this reproduces the matching
    row of ``K`` exactly, because the scalar kernel is evaluated by the same
    code path as during assembly and is bitwise symmetric in its arguments.
    """
    if gram.training_refs is None:
        raise ValueError("training references not attached to this KernelGram")
    q = query if isinstance(query, SpdMatrix) else SpdMatrix(query)
    if q.dim != gram.dim:
        raise DimensionMismatchError(
            f"query dim {q.dim} does not match training dim {gram.dim}"
        )
    out = np.empty(gram.n)
    for j, ref in enumerate(gram.training_refs):
        out[j] = stein_kernel(q, ref, gram.sigma)
    return out
