"""Invariant-scalar parameterizations of equivariant vector functions.

Build, evaluate, and certify functions of vector tuples that respect
orthogonal, rotation, Euclidean, Lorentz, Poincare, and permutation
symmetry, using only invariant scalar features.
"""

from .core import Metric, VectorTuple, euclidean, inner, minkowski
from .features import (
    OmegaSample,
    ScalarFeatureSet,
    cholesky_reconstruct,
    gram,
    lorentz_orthogonalize,
    omega_complete,
    omega_sample,
    subdeterminants,
    translation_reduce,
)
from .basis import (
    EquivariantModel,
    FixedClosure,
    evaluate,
    generalized_cross,
    span_check,
    symmetrize_permutation,
)
from .harness import CertReport, SymmetrySpec, certify, certify_joint

__all__ = [
    "CertReport",
    "EquivariantModel",
    "FixedClosure",
    "Metric",
    "OmegaSample",
    "ScalarFeatureSet",
    "SymmetrySpec",
    "VectorTuple",
    "certify",
    "certify_joint",
    "cholesky_reconstruct",
    "euclidean",
    "evaluate",
    "generalized_cross",
    "gram",
    "inner",
    "lorentz_orthogonalize",
    "minkowski",
    "omega_complete",
    "omega_sample",
    "span_check",
    "subdeterminants",
    "symmetrize_permutation",
    "translation_reduce",
]
