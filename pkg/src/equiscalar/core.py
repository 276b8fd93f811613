"""Shared geometric data model: metrics, role-tagged vector tuples, inner products.

All numerics are IEEE-754 doubles. Vectors and matrices are plain numpy
arrays; the constructors here validate finiteness and shape once so that
downstream code can assume well-formed inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, RoleError, ShapeError

POSITION = "position"
FREE = "free"

EUCLIDEAN = "euclidean"
MINKOWSKI = "minkowski"


def as_vector(v, d=None) -> np.ndarray:
    """Validate and return a finite 1-d float64 array of length >= 1."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ShapeError(f"expected a 1-d vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("vector contains NaN or Inf")
    if d is not None and a.size != d:
        raise DimensionMismatchError(d, a.size)
    return a


def as_matrix(m, rows=None, cols=None) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("matrix contains NaN or Inf")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {a.shape[1]}")
    return a


@dataclass(frozen=True)
class Metric:
    """Euclidean or Minkowski signature descriptor.

    For the Minkowski kind, ``dim`` is the full spacetime dimension d+1 and
    the signature is (+, -, ..., -) with the timelike axis first.
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, MINKOWSKI):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("metric dimension must be >= 1")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind == EUCLIDEAN:
            return np.eye(self.dim)
        lam = -np.eye(self.dim)
        lam[0, 0] = 1.0
        return lam

    @property
    def signature(self) -> np.ndarray:
        """Diagonal of the metric matrix (both metrics here are diagonal)."""
        s = np.ones(self.dim) if self.kind == EUCLIDEAN else -np.ones(self.dim)
        if self.kind == MINKOWSKI:
            s[0] = 1.0
        return s


def euclidean(d: int) -> Metric:
    return Metric(EUCLIDEAN, d)


def minkowski(d_plus_1: int) -> Metric:
    return Metric(MINKOWSKI, d_plus_1)


def inner(metric: Metric, a, b) -> float:
    """Invariant scalar product: a^T b or a^T diag(1,-1,...,-1) b."""
    a = as_vector(a, metric.dim)
    b = as_vector(b, metric.dim)
    return float(np.dot(a * metric.signature, b))


@dataclass(frozen=True)
class VectorTuple:
    """An ordered list of n same-dimension vectors, each tagged position/free."""

    vectors: np.ndarray  # (n, d)
    roles: tuple = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.vectors, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"expected an (n, d) array of vectors, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("vector tuple contains NaN or Inf")
        object.__setattr__(self, "vectors", a)
        roles = self.roles
        if roles is None:
            roles = (FREE,) * a.shape[0]
        roles = tuple(roles)
        if len(roles) != a.shape[0]:
            raise RoleError(f"{len(roles)} roles for {a.shape[0]} vectors")
        for r in roles:
            if r not in (POSITION, FREE):
                raise RoleError(f"unknown role {r!r}")
        object.__setattr__(self, "roles", roles)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def position_indices(self) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == POSITION], dtype=int)

    def with_vectors(self, vectors) -> "VectorTuple":
        return VectorTuple(vectors, self.roles)

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "vectors": [list(map(float, v)) for v in self.vectors],
                "roles": list(self.roles),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "VectorTuple":
        obj = json.loads(text)
        vecs = np.asarray(obj["vectors"], dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[1] != obj["d"]:
            raise ShapeError("JSON vectors inconsistent with declared dimension d")
        return cls(vecs, tuple(obj["roles"]))

    def to_csv(self) -> str:
        tags = {POSITION: "p", FREE: "f"}
        lines = ["#roles: " + ",".join(tags[r] for r in self.roles)]
        lines += [",".join(repr(float(x)) for x in v) for v in self.vectors]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "VectorTuple":
        roles = None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#roles:"):
                tags = {"p": POSITION, "f": FREE}
                try:
                    roles = tuple(tags[t.strip()] for t in line[len("#roles:"):].split(","))
                except KeyError as exc:
                    raise RoleError(f"unknown role tag {exc.args[0]!r} in CSV header")
                continue
            if line.startswith("#"):
                continue
            rows.append([float(x) for x in line.split(",")])
        vecs = np.asarray(rows, dtype=np.float64)
        return cls(vecs, roles)
