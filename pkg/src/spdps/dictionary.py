"""Dictionary learning over projected embeddings, with residual classification.

:func:`ksvd_train` alternates greedy sparse coding (:func:`spdps.sparse_solver.omp`)
with rank-1 singular-vector atom updates.  The coding step keeps a signal's
previous code whenever it beats the freshly computed one, so the recorded
objective ``sum_j ||k_j - D v_j||^2`` is non-increasing by construction, not
just in practice.  Atoms that no signal uses are replaced by the currently
worst-represented signal.

Classification assigns a query to the class whose dictionary reconstructs
it with the smallest residual.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from spdps.projection import DpsEmbedding
from spdps.sparse_solver import omp
from spdps.spd_core import DimensionMismatchError

__all__ = [
    "DpsDictionary",
    "ksvd_train",
    "sparse_code",
    "classify_by_residual",
]


@dataclasses.dataclass(frozen=True)
class DpsDictionary:
    """m unit-norm atoms over a k-dim embedding space, plus training record."""

    atoms: np.ndarray
    T0: int
    lam: float
    training_history: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim != 2:
            raise ValueError(f"atoms must be 2-D, got shape {atoms.shape}")
        norms = np.linalg.norm(atoms, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("every atom must have unit norm")
        if not 1 <= self.T0 <= atoms.shape[1]:
            raise ValueError(f"T0 must be in [1, {atoms.shape[1]}], got {self.T0}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        hist = np.asarray(self.training_history, dtype=float)
        if hist.size and np.any(np.diff(hist) > 1e-9):
            raise ValueError("training history must be non-increasing")
        atoms = atoms.copy()
        atoms.flags.writeable = False
        hist = hist.copy()
        hist.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "training_history", hist)

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]


def _as_vector(embedding) -> np.ndarray:
    if isinstance(embedding, DpsEmbedding):
        return embedding.vector
    return np.asarray(embedding, dtype=float).ravel()


def _unit(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < 1e-300:
        v = rng.standard_normal(v.size)
        norm = np.linalg.norm(v)
    return v / norm


def ksvd_train(
    embeddings,
    m: int,
    T0: int = 3,
    iterations: int = 30,
    seed: int = 0,
    lam: float = 0.0,
) -> DpsDictionary:
    """Learn m atoms by alternating OMP coding and rank-1 atom updates.

    Atoms start as a seeded sample of the signals (normalized); with
    ``iterations=0`` that initialization is returned untouched.  Each
    iteration records the post-update objective.  Identical data and seed
    reproduce the dictionary bitwise.
    """
    signals = np.column_stack([_as_vector(e) for e in embeddings]) if len(embeddings) else None
    if signals is None:
        raise ValueError("need at least one embedding")
    k, n = signals.shape
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    if not 1 <= T0 <= m:
        raise ValueError(f"T0 must be in [1, {m}], got {T0}")
    if iterations < 0:
        raise ValueError(f"iterations must be nonnegative, got {iterations}")

    rng = np.random.default_rng(seed)
    picks = rng.choice(n, size=m, replace=False)
    atoms = np.empty((k, m))
    for idx, pick in enumerate(picks):
        atoms[:, idx] = _unit(signals[:, pick].copy(), rng)

    codes = np.zeros((m, n))
    history = []
    for iteration in range(iterations):
        for j in range(n):
            fresh = omp(atoms, signals[:, j], T0)
            if iteration == 0:
                codes[:, j] = fresh
            else:
                # keep the previous code when recoding would lose ground
                old_resid = np.linalg.norm(signals[:, j] - atoms @ codes[:, j])
                new_resid = np.linalg.norm(signals[:, j] - atoms @ fresh)
                if new_resid <= old_resid:
                    codes[:, j] = fresh

        for a_idx in range(m):
            using = np.flatnonzero(codes[a_idx])
            if using.size == 0:
                residuals = np.linalg.norm(signals - atoms @ codes, axis=0)
                worst = residuals.max()
                ties = np.flatnonzero(residuals >= worst)
                pick = int(rng.choice(ties))
                atoms[:, a_idx] = _unit(signals[:, pick].copy(), rng)
                continue
            partial = signals[:, using] - atoms @ codes[:, using]
            partial += np.outer(atoms[:, a_idx], codes[a_idx, using])
            u, s, vt = np.linalg.svd(partial, full_matrices=False)
            atoms[:, a_idx] = _unit(u[:, 0], rng)
            codes[a_idx, using] = s[0] * vt[0]

        history.append(float(np.sum((signals - atoms @ codes) ** 2)))

    return DpsDictionary(atoms=atoms, T0=T0, lam=lam, training_history=np.array(history))


def sparse_code(embedding, dictionary: DpsDictionary) -> np.ndarray:
    """T0-sparse code of one embedding over the dictionary's atoms."""
    v = _as_vector(embedding)
    if v.size != dictionary.k:
        raise DimensionMismatchError(
            f"embedding has length {v.size}, atoms have length {dictionary.k}"
        )
    return omp(dictionary.atoms, v, dictionary.T0)


def classify_by_residual(embedding, class_dicts) -> int:
    """Class id whose dictionary reconstructs the embedding best.

    Ties go to the lowest class id.
    """
    if not len(class_dicts):
        raise ValueError("need at least one class dictionary")
    v = _as_vector(embedding)
    dims = {d.k for d in class_dicts}
    if len(dims) != 1:
        raise DimensionMismatchError(f"class dictionaries disagree on dimension: {sorted(dims)}")
    residuals = np.empty(len(class_dicts))
    for c, dictionary in enumerate(class_dicts):
        code = sparse_code(v, dictionary)
        residuals[c] = np.linalg.norm(v - dictionary.atoms @ code)
    return int(np.argmin(residuals))
