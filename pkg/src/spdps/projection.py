"""Projections from kernel space to short Euclidean vectors.

Two families share the same shape of map.  Writing ``K_half`` for the Gram
square root, a projection is ``W = K_half @ R`` for some right factor ``R``,
and a point embeds as ``kernel_vector(query) @ W``.

* :func:`rose_map` draws the right factor at random: each column is
  ``(1/t) e_S - (1/p) 1`` for a seeded size-t subset S of the training set.
* :func:`dps_projection` learns it from data: the self-expressive code
  graphs (local, global, or both side by side, weighted by alpha/beta)
  replace the random subsets, so nearby training points vote for shared
  coordinates and pairwise distance structure survives the projection.

Embeddings of training point i reduce to row i of ``K @ W``; see
:func:`training_embeddings`.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from spdps.kernel_space import KernelGram, kernel_vector
from spdps.sparse_solver import SparseCodes
from spdps.spd_core import DimensionMismatchError

__all__ = [
    "SparseGraph",
    "ProjectionModel",
    "DpsEmbedding",
    "rose_map",
    "build_graph",
    "default_block_weight",
    "dps_projection",
    "embed",
    "embed_kernel_vector",
    "embed_batch",
    "training_embeddings",
]

VARIANTS = ("rose", "local", "global", "hybrid")


@dataclasses.dataclass(frozen=True)
class SparseGraph:
    """Unweighted similarity graph from thresholded self-expressive codes."""

    n: int
    adjacency: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("local", "global"):
            raise ValueError(f"kind must be 'local' or 'global', got {self.kind!r}")
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be exactly symmetric")
        if np.any(np.diag(adj) != 0.0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.all((adj == 0.0) | (adj == 1.0)):
            raise ValueError("adjacency entries must be 0 or 1")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)


@dataclasses.dataclass(frozen=True)
class ProjectionModel:
    """A fitted kernel-space projection ``W`` plus the pieces it was built from.

    ``projection`` is the n x k matrix applied on the right of a kernel
    vector.  ``right_factor`` (when present) reconstructs it as
    ``K_half @ right_factor``; ``selector`` keeps the rose subset indicator;
    ``kept_columns`` records which columns of the unpruned factor survived.
    Models restored from a cache may carry ``gram=None`` until training
    references are re-attached.
    """

    gram: KernelGram | None
    variant: str
    projection: np.ndarray
    alpha: float
    beta: float
    selector: np.ndarray | None = None
    right_factor: np.ndarray | None = None
    kept_columns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        w = np.asarray(self.projection, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"projection must be 2-D, got shape {w.shape}")
        if self.gram is not None and w.shape[0] != self.gram.n:
            raise DimensionMismatchError(
                f"projection has {w.shape[0]} rows for {self.gram.n} training points"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("projection entries must be finite")
        if self.right_factor is not None and self.gram is not None:
            recon = self.gram.K_half @ np.asarray(self.right_factor, dtype=float)
            scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
            if np.max(np.abs(recon - w)) > 1e-10 * scale:
                raise ValueError("projection does not match K_half @ right_factor")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "projection", w)

    @property
    def k(self) -> int:
        return self.projection.shape[1]

    def with_gram(self, gram: KernelGram) -> "ProjectionModel":
        """Copy of this model with a Gram (and its training refs) attached."""
        return dataclasses.replace(self, gram=gram)


@dataclasses.dataclass(frozen=True)
class DpsEmbedding:
    """A projected point: a short real vector plus an optional class id."""

    vector: np.ndarray
    label: int | None = None

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding entries must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def k(self) -> int:
        return self.vector.size


def rose_map(
    gram: KernelGram,
    t: int | None = None,
    k: int = 128,
    seed: int = 0,
) -> ProjectionModel:
    """Random hyperplane projection: k columns from seeded size-t subsets.

    Column i of the right factor is ``(1/t) e_S - (1/p) 1`` with S drawn
    without replacement by ``default_rng(seed)`` and p = n; the projection
    is ``K_half`` times that.  Deterministic for a fixed seed.
    """
    n = gram.n
    if t is None:
        t = min(30, math.ceil(n / 3))
    if not 1 <= t < n:
        raise ValueError(f"t must satisfy 1 <= t < n={n}, got {t}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    selector = np.zeros((n, k))
    for col in range(k):
        selector[rng.choice(n, size=t, replace=False), col] = 1.0
    right = selector / t - 1.0 / n
    return ProjectionModel(
        gram=gram,
        variant="rose",
        projection=gram.K_half @ right,
        alpha=(n - t) / t,
        beta=0.0,
        selector=selector,
        right_factor=right,
        kept_columns=tuple(range(k)),
    )


def build_graph(codes: SparseCodes, tau: float | None = None) -> SparseGraph:
    """Threshold codes into an unweighted symmetric graph.

    Points i and j connect iff either code weight exceeds ``tau`` in
    magnitude (``tau`` defaults to the codes' own threshold).
    """
    if tau is None:
        tau = codes.tau
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    hot = np.abs(codes.codes) > tau
    adj = (hot | hot.T).astype(float)
    np.fill_diagonal(adj, 0.0)
    return SparseGraph(n=codes.n, adjacency=adj, kind=codes.mode)


def default_block_weight(n: int) -> float:
    """Default graph-block weight (p - t)/t at the subset size t = ceil(n/3)."""
    t = math.ceil(n / 3)
    return (n - t) / t


def _as_adjacency(graph, n: int, name: str) -> np.ndarray:
    if graph is None:
        return None
    if isinstance(graph, SparseGraph):
        if graph.n != n:
            raise DimensionMismatchError(f"{name} is sized {graph.n}, expected {n}")
        return graph.adjacency
    adj = np.asarray(graph, dtype=float)
    if adj.shape != (n, n):
        raise DimensionMismatchError(f"{name} must be {n}x{n}, got {adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise ValueError(f"{name} must be exactly symmetric")
    return adj


def dps_projection(
    gram: KernelGram,
    graph_l=None,
    graph_g=None,
    alpha: float | None = None,
    beta: float | None = None,
    prune: bool = True,
) -> ProjectionModel:
    """Learned projection from one or both similarity graphs.

    The right factor is the weighted graph block ``[alpha W_l  beta W_g]``
    (or the single present block); ``prune`` drops its all-zero columns so
    isolated vertices do not spend embedding coordinates.  Both weights
    default to :func:`default_block_weight`.
    """
    n = gram.n
    adj_l = _as_adjacency(graph_l, n, "graph_l")
    adj_g = _as_adjacency(graph_g, n, "graph_g")
    if adj_l is None and adj_g is None:
        raise ValueError("at least one graph is required")
    if alpha is None:
        alpha = default_block_weight(n)
    if beta is None:
        beta = default_block_weight(n)

    if adj_l is not None and adj_g is not None:
        variant = "hybrid"
        right = np.hstack([alpha * adj_l, beta * adj_g])
    elif adj_l is not None:
        variant = "local"
        right = alpha * adj_l
    else:
        variant = "global"
        right = beta * adj_g

    if prune:
        kept = tuple(int(j) for j in np.flatnonzero(np.any(right != 0.0, axis=0)))
        right = right[:, list(kept)]
    else:
        kept = tuple(range(right.shape[1]))

    return ProjectionModel(
        gram=gram,
        variant=variant,
        projection=gram.K_half @ right,
        alpha=alpha,
        beta=beta,
        selector=None,
        right_factor=right,
        kept_columns=kept,
    )


def embed_kernel_vector(kvec, model: ProjectionModel) -> np.ndarray:
    """Apply the projection to an already-computed kernel vector."""
    v = np.asarray(kvec, dtype=float).ravel()
    if v.size != model.projection.shape[0]:
        raise DimensionMismatchError(
            f"kernel vector has length {v.size}, expected {model.projection.shape[0]}"
        )
    return v @ model.projection


def embed(query, model: ProjectionModel, label: int | None = None) -> DpsEmbedding:
    """Project one SPD matrix: kernel vector against training, times W."""
    if model.gram is None:
        raise ValueError("model has no Gram attached; call with_gram first")
    kvec = kernel_vector(query, model.gram)
    return DpsEmbedding(vector=embed_kernel_vector(kvec, model), label=label)


def embed_batch(queries, model: ProjectionModel, labels=None) -> list[DpsEmbedding]:
    """Elementwise :func:`embed`, order-preserving; errors name the index."""
    if labels is None:
        labels = [None] * len(queries)
    if len(labels) != len(queries):
        raise ValueError(f"{len(queries)} queries but {len(labels)} labels")
    out = []
    for idx, (q, lab) in enumerate(zip(queries, labels)):
        try:
            out.append(embed(q, model, label=lab))
        except Exception as exc:
            raise type(exc)(f"query {idx}: {exc}") from exc
    return out


def training_embeddings(model: ProjectionModel, labels=None) -> list[DpsEmbedding]:
    """Embeddings of the training set itself, computed as rows of K @ W."""
    if model.gram is None:
        raise ValueError("model has no Gram attached; call with_gram first")
    mat = model.gram.K @ model.projection
    if labels is None:
        labels = [None] * model.gram.n
    if len(labels) != model.gram.n:
        raise ValueError(f"{model.gram.n} training points but {len(labels)} labels")
    return [DpsEmbedding(vector=mat[i], label=labels[i]) for i in range(model.gram.n)]
