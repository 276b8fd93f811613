"""Equivariant vector functions as scalar-coefficient combinations of inputs.

Every model here evaluates h = sum_t f_t(features) v_t, optionally plus
generalized cross-product terms for SO(d), where the coefficient functions
see only invariant scalar features, never raw vectors. Equivariance is
therefore structural, not audited.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import EUCLIDEAN, MINKOWSKI, Metric, VectorTuple, as_vector, euclidean
from .errors import RoleError, ShapeError
from .features import (
    CENTER_OF_POSITIONS,
    ScalarFeatureSet,
    gram,
    subdeterminants,
    translation_reduce,
)

O_FAMILY = "o"
SO_FAMILY = "so"
E_FAMILY = "e"
LORENTZ_FAMILY = "lorentz"
POINCARE_FAMILY = "poincare"

MODE_INVARIANT = "invariant"
MODE_EQUIVARIANT = "equivariant"

MAX_EXPLICIT_SYMMETRIZE = 8


def generalized_cross(vs) -> np.ndarray:
    """Cross product of d-1 vectors in R^d: the unique x with
    <x, y> = det(v_1, ..., v_{d-1}, y) for all y."""
    vs = [np.asarray(v, dtype=np.float64) for v in vs]
    if not vs:
        raise ShapeError("generalized cross product needs at least one vector")
    d = len(vs) + 1
    for v in vs:
        as_vector(v, d)
    cols = np.column_stack(vs)  # (d, d-1)
    out = np.empty(d)
    for k in range(d):
        minor = np.delete(cols, k, axis=0)
        out[k] = (-1.0) ** (k + d + 1) * np.linalg.det(minor)
    return out


class FixedClosure:
    """Coefficient fixture wrapping plain callables of the feature set.

    ``fn(features) -> array of n coefficients``; ``cross_fn(features) ->
    {subset: coefficient}`` for the SO(d) cross terms.
    """

    def __init__(self, fn, cross_fn=None, name=None):
        self.fn = fn
        self.cross_fn = cross_fn
        self.name = name

    def coefficients(self, features: ScalarFeatureSet):
        coeffs = np.asarray(self.fn(features), dtype=np.float64)
        if coeffs.shape != (features.n,):
            raise ShapeError(
                f"coefficient function returned shape {coeffs.shape}, expected ({features.n},)"
            )
        cross = self.cross_fn(features) if self.cross_fn is not None else None
        return coeffs, cross


def select_vector(t: int, name=None):
    """The projection fixture f_s = delta_{s,t}; equivariant for every family."""
    return FixedClosure(
        lambda feats: np.eye(feats.n)[t], name=name or f"select-{t}"
    )


def uniform_mixture(name="uniform"):
    return FixedClosure(lambda feats: np.full(feats.n, 1.0 / feats.n), name=name)


@dataclass
class EquivariantModel:
    family: str
    metric: Metric
    coeffs: object  # anything with .coefficients(ScalarFeatureSet)
    mode: str = MODE_EQUIVARIANT  # E(d)/Poincare translation behaviour
    permutation_symmetric: bool = False


def _features_for(model: EquivariantModel, x: VectorTuple) -> ScalarFeatureSet:
    if model.family in (O_FAMILY, LORENTZ_FAMILY):
        return ScalarFeatureSet(gram(model.metric, x), model.metric)
    if model.family == SO_FAMILY:
        return ScalarFeatureSet(gram(model.metric, x), model.metric, subdets=subdeterminants(x))
    if model.family in (E_FAMILY, POINCARE_FAMILY):
        if not any(r == "position" for r in x.roles):
            raise RoleError(f"{model.family} family requires position role tags")
        # Center-of-positions reduction keeps slot count aligned with the
        # original tuple, so coefficient vectors stay length n.
        reduced = translation_reduce(x, CENTER_OF_POSITIONS)
        return ScalarFeatureSet(gram(model.metric, reduced), model.metric, n_out=x.n)
    raise ValueError(f"unknown family {model.family!r}")


def _renormalize_translation(coeffs, x: VectorTuple, mode: str) -> np.ndarray:
    """Affine constraint on the position coefficients: sum 0 (invariant
    output) or sum 1 (equivariant output); free coefficients untouched."""
    pos = x.position_indices()
    out = coeffs.copy()
    if mode == MODE_INVARIANT:
        out[pos] -= out[pos].mean()
    elif mode == MODE_EQUIVARIANT:
        out[pos] += (1.0 - out[pos].sum()) / pos.size
    else:
        raise ValueError(f"unknown translation mode {mode!r}")
    return out


def evaluate(model: EquivariantModel, x: VectorTuple) -> np.ndarray:
    if x.d != model.metric.dim:
        raise ShapeError(f"tuple dimension {x.d} does not match metric dimension {model.metric.dim}")
    coeff_fn = model.coeffs
    if model.permutation_symmetric:
        coeff_fn = symmetrize_permutation(coeff_fn, x.n)
    features = _features_for(model, x)
    coeffs, cross_coeffs = coeff_fn.coefficients(features)
    if model.family in (E_FAMILY, POINCARE_FAMILY):
        mode = MODE_EQUIVARIANT if model.family == POINCARE_FAMILY else model.mode
        coeffs = _renormalize_translation(coeffs, x, mode)
    h = coeffs @ x.vectors
    if model.family == SO_FAMILY and cross_coeffs:
        d = x.d
        for subset, c in cross_coeffs.items():
            subset = tuple(subset)
            if len(subset) != d - 1:
                raise ShapeError(
                    f"cross-term subset {subset} has {len(subset)} vectors, expected d-1={d - 1}"
                )
            h = h + c * generalized_cross([x.vectors[i] for i in subset])
    elif cross_coeffs:
        raise ShapeError("cross-term coefficients are only valid for the SO family")
    return h


class _SymmetrizedCoefficients:
    """Explicit S_n orbit average of a coefficient function.

    The slot coefficient becomes (1/n!) sum_sigma f_{sigma^{-1}(t)} evaluated
    on sigma-permuted features; cross-term coefficients pick up the sign of
    sorting the permuted subset.
    """

    def __init__(self, base, n: int):
        if n > MAX_EXPLICIT_SYMMETRIZE:
            raise ShapeError(
                f"explicit symmetrization is limited to n <= {MAX_EXPLICIT_SYMMETRIZE} "
                f"(got n={n}); use a pooled slot-symmetric coefficient function instead"
            )
        self.base = base
        self.n = n
        self.name = f"symmetrized({getattr(base, 'name', base)!r})"

    def coefficients(self, features: ScalarFeatureSet):
        n = features.n
        if n != self.n:
            raise ShapeError(f"symmetrized for n={self.n}, features have n={n}")
        total = np.zeros(n)
        cross_total = {}
        count = math.factorial(n)
        for sigma in itertools.permutations(range(n)):
            idx = list(sigma)
            permuted_gram = features.gram[np.ix_(idx, idx)]
            permuted_subdets = None
            if features.subdets is not None:
                permuted_subdets = _permute_subdets(features.subdets, sigma)
            pf = ScalarFeatureSet(permuted_gram, features.metric, subdets=permuted_subdets)
            coeffs, cross = self.base.coefficients(pf)
            for t in range(n):
                total[sigma[t]] += coeffs[t]
            if cross:
                for subset, c in cross.items():
                    mapped = [sigma[i] for i in subset]
                    order = np.argsort(mapped)
                    sign = _perm_sign(order)
                    key = tuple(sorted(mapped))
                    cross_total[key] = cross_total.get(key, 0.0) + sign * c
        total /= count
        cross_out = {k: v / count for k, v in cross_total.items()} if cross_total else None
        return total, cross_out


def _perm_sign(order) -> float:
    seen = [False] * len(order)
    sign = 1.0
    for i in range(len(order)):
        if seen[i]:
            continue
        length = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = int(order[j])
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _permute_subdets(subdets: dict, sigma) -> dict:
    """Subdeterminants of the sigma-permuted tuple from those of the original.

    det of columns (v_{sigma(s)})_{s in S ascending-by-S} equals the stored
    det at sorted(sigma(S)) times the sign of the sort.
    """
    out = {}
    for subset in subdets:
        mapped = [sigma[i] for i in subset]
        order = np.argsort(mapped)
        sign = _perm_sign(order)
        out[tuple(subset)] = sign * subdets[tuple(sorted(mapped))]
    return out


def symmetrize_permutation(coeffs, n: int):
    """Wrap a coefficient function so the resulting model is S_n-invariant."""
    if isinstance(coeffs, _SymmetrizedCoefficients):
        return coeffs
    return _SymmetrizedCoefficients(coeffs, n)


def span_check(x: VectorTuple, h_out, metric: Metric | None = None) -> float:
    """Euclidean norm of h_out's residual off span(v_1..v_n)."""
    h = np.asarray(h_out, dtype=np.float64)
    if x.n == 0:
        return float(np.linalg.norm(h))
    basis = x.vectors.T  # (d, n)
    coef, *_ = np.linalg.lstsq(basis, h, rcond=None)
    return float(np.linalg.norm(basis @ coef - h))
