"""Kernel projection spaces for symmetric positive definite matrix data.

Subpackages cover the full pipeline: region covariance descriptors
(:mod:`spdps.features`), divergence kernels (:mod:`spdps.spd_core`,
:mod:`spdps.kernel_space`), sparse self-expressive coding
(:mod:`spdps.sparse_solver`), random and learned projections
(:mod:`spdps.projection`), supervised refinement
(:mod:`spdps.discriminant`, :mod:`spdps.dictionary`), plain Euclidean
classifiers (:mod:`spdps.classify`), and a reproducible experiment harness
(:mod:`spdps.harness`, CLI in :mod:`spdps.cli`).
"""

from spdps.spd_core import (
    DimensionMismatchError,
    PositiveDefiniteError,
    SpdMatrix,
    SymmetryError,
    airm_exp,
    airm_log,
    geodesic_distance,
    regularize,
    spd_expm,
    spd_logm,
    spd_sqrt,
    stein_divergence,
    stein_kernel,
    sym_eig,
)

__version__ = "0.1.0"

__all__ = [
    "SpdMatrix",
    "SymmetryError",
    "PositiveDefiniteError",
    "DimensionMismatchError",
    "sym_eig",
    "spd_logm",
    "spd_expm",
    "spd_sqrt",
    "airm_log",
    "airm_exp",
    "geodesic_distance",
    "stein_divergence",
    "stein_kernel",
    "regularize",
    "__version__",
]
