"""Supervised refinement of projected embeddings by graph discriminant analysis.

Class structure enters through two unweighted nearest-neighbor graphs over
the embedded training set: ``E_w`` joins mutual within-class neighbors and
``E_b`` joins between-class ones.  With ``L_b = D_b - E_b`` the learned
directions solve the generalized eigenproblem

    Kh (L_b + beta E_w) Khᵀ w = lambda Kh D_w Khᵀ w

for the embedding matrix ``Kh`` (one column per training point), keeping the
``r`` largest eigenvalues.  The right-hand matrix is ridge-stabilized, since
it is rank-deficient whenever the embedding dimension exceeds the training
count, and the returned coefficients are scaled so the Fisher-style
constraint ``trace(Wᵀ Kh D_w Khᵀ W) = 1`` holds.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import eigh

from spdps.projection import DpsEmbedding
from spdps.spd_core import DimensionMismatchError

__all__ = [
    "BETA_SWEEP",
    "ClassGraphs",
    "DiscriminantModel",
    "build_class_graphs",
    "solve_gda",
    "transform",
]

# Candidate Lagrangian weights for validation sweeps.
BETA_SWEEP = (0.1, 0.5, 1.0, 2.0)

DEFAULT_BETA = 0.5
RIDGE_RTOL = 1e-8


@dataclasses.dataclass(frozen=True)
class ClassGraphs:
    """Within- and between-class neighbor graphs with degree/Laplacian terms."""

    E_w: np.ndarray
    E_b: np.ndarray
    D_w: np.ndarray
    D_b: np.ndarray
    L_b: np.ndarray
    class_count: int

    def __post_init__(self):
        for name in ("E_w", "E_b", "D_w", "D_b", "L_b"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.E_w.shape[0]


@dataclasses.dataclass(frozen=True)
class DiscriminantModel:
    """Discriminant directions: columns project embeddings to r coordinates.

    ``eigenvalues`` are the kept generalized eigenvalues, descending;
    ``ridge`` is the stabilizer added to the right-hand matrix.
    """

    coefficients: np.ndarray
    r: int
    beta_lagrange: float
    eigenvalues: np.ndarray
    ridge: float

    def __post_init__(self):
        w = np.asarray(self.coefficients, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.r:
            raise ValueError(f"coefficients must have {self.r} columns, got shape {w.shape}")
        evs = np.asarray(self.eigenvalues, dtype=float)
        if evs.shape != (self.r,):
            raise ValueError(f"expected {self.r} eigenvalues, got shape {evs.shape}")
        w = w.copy()
        w.flags.writeable = False
        evs = evs.copy()
        evs.flags.writeable = False
        object.__setattr__(self, "coefficients", w)
        object.__setattr__(self, "eigenvalues", evs)


def _neighbor_sets(vectors: np.ndarray, mask: np.ndarray, nu: int) -> np.ndarray:
    """Mutual-or adjacency from per-row candidate masks, ties to lower index."""
    n = vectors.shape[0]
    adj = np.zeros((n, n))
    if nu < 1:
        return adj
    sq = np.sum(vectors**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vectors @ vectors.T)
    for i in range(n):
        candidates = np.flatnonzero(mask[i])
        if candidates.size == 0:
            continue
        order = candidates[np.argsort(d2[i, candidates], kind="stable")]
        for j in order[:nu]:
            adj[i, j] = 1.0
            adj[j, i] = 1.0
    return adj


def build_class_graphs(
    embeddings: list[DpsEmbedding],
    nu_w: int | None = None,
    nu_b: int = 5,
) -> ClassGraphs:
    """Nearest-neighbor graphs split by label agreement.

    ``E_w[i, j] = 1`` iff j is among the ``nu_w`` same-label Euclidean
    nearest neighbors of i, or i is among j's; ``E_b`` is the analogue over
    different-label pairs with budget ``nu_b``.  Exact distance ties go to
    the lower index.  ``nu_w`` defaults to ``min(smallest class - 1, 5)``;
    a single-member class simply has no within-class edges.
    """
    if len(embeddings) < 2:
        raise ValueError("need at least 2 embeddings")
    labels = np.array([e.label for e in embeddings])
    if any(lab is None for lab in labels):
        raise ValueError("every embedding needs a label")
    labels = labels.astype(int)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError("need at least 2 classes")
    if nu_w is None:
        nu_w = max(min(int(counts.min()) - 1, 5), 1)
    if nu_w < 1 or nu_b < 1:
        raise ValueError("neighbor budgets must be >= 1")
    vectors = np.vstack([e.vector for e in embeddings])

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]

    e_w = _neighbor_sets(vectors, same, nu_w)
    e_b = _neighbor_sets(vectors, diff, nu_b)
    d_w = np.diag(e_w.sum(axis=1))
    d_b = np.diag(e_b.sum(axis=1))
    return ClassGraphs(
        E_w=e_w, E_b=e_b, D_w=d_w, D_b=d_b, L_b=d_b - e_b, class_count=int(classes.size)
    )


def solve_gda(
    embedding_matrix,
    graphs: ClassGraphs,
    beta_lagrange: float = DEFAULT_BETA,
    r: int | None = None,
) -> DiscriminantModel:
    """Top-r directions of the class-graph generalized eigenproblem.

    ``embedding_matrix`` holds one embedded training point per column.
    Columns of the result are scaled jointly so
    ``trace(Wᵀ Kh D_w Khᵀ W) = 1``.  ``r`` defaults to one less than the
    class count, capped by the rank of the right-hand matrix.
    """
    kh = np.asarray(embedding_matrix, dtype=float)
    if kh.ndim != 2 or kh.shape[1] != graphs.n:
        raise DimensionMismatchError(
            f"embedding matrix must have {graphs.n} columns, got shape {kh.shape}"
        )
    degrees = np.diag(graphs.D_w)
    if not np.any(degrees):
        raise ValueError("within-class graph has no edges; cannot normalize")

    a = kh @ (graphs.L_b + beta_lagrange * graphs.E_w) @ kh.T
    b = kh @ graphs.D_w @ kh.T
    a = (a + a.T) / 2.0
    b = (b + b.T) / 2.0
    n = graphs.n
    ridge = RIDGE_RTOL * float(np.trace(b)) / n
    b_solve = b + ridge * np.eye(b.shape[0])

    eigenvalues, vectors = eigh(a, b_solve)
    order = np.argsort(eigenvalues, kind="stable")[::-1]

    b_rank = int(np.sum(np.linalg.eigvalsh(b) > ridge))
    if r is None:
        r = max(graphs.class_count - 1, 1)
    r = min(r, b_rank, kh.shape[0])
    if r < 1:
        raise ValueError("right-hand matrix has rank 0; no directions available")

    keep = order[:r]
    w = vectors[:, keep]
    evs = eigenvalues[keep]
    # eigh returns b_solve-orthonormal vectors; rescale against the true
    # (unridged) constraint matrix so the trace normalization is exact.
    for col in range(r):
        energy = float(w[:, col] @ b @ w[:, col])
        if energy <= 0.0:
            raise ValueError(f"direction {col} has no within-class energy")
        w[:, col] /= np.sqrt(r * energy)
    return DiscriminantModel(
        coefficients=w, r=r, beta_lagrange=beta_lagrange, eigenvalues=evs, ridge=ridge
    )


def transform(embedding, model: DiscriminantModel, training_matrix=None) -> np.ndarray:
    """Project one embedding through the discriminant directions: Wᵀ k̂."""
    vec = embedding.vector if isinstance(embedding, DpsEmbedding) else np.asarray(embedding, dtype=float)
    if vec.shape != (model.coefficients.shape[0],):
        raise DimensionMismatchError(
            f"embedding has shape {vec.shape}, expected ({model.coefficients.shape[0]},)"
        )
    if training_matrix is not None:
        tm = np.asarray(training_matrix, dtype=float)
        if tm.ndim != 2 or tm.shape[0] != model.coefficients.shape[0]:
            raise DimensionMismatchError(
                f"training matrix rows {tm.shape} do not match coefficient rows "
                f"{model.coefficients.shape[0]}"
            )
    return model.coefficients.T @ vec
