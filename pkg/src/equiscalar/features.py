"""Invariant scalar features of vector tuples.

Gram matrices under either metric, SO(d) subdeterminants, translation
quotients, the wrap-around band sampling of a low-rank Gram matrix with its
alternating-least-squares completion, Gram reconstruction, and Minkowski
Gram-Schmidt with lightlike restarts.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import EUCLIDEAN, FREE, MINKOWSKI, POSITION, Metric, VectorTuple, as_matrix
from .errors import DegenerateInputError, IndefiniteMatrixError, RoleError, ShapeError

FIRST_POSITION = "first-position"
CENTER_OF_POSITIONS = "center-of-positions"

LIGHTLIKE_REL_TOL = 1e-10
MAX_GS_RESTARTS = 50


@dataclass(frozen=True)
class ScalarFeatureSet:
    """Gram matrix plus optional subdeterminant features of one tuple."""

    gram: np.ndarray
    metric: Metric
    subdets: dict | None = None
    n_out: int | None = None  # coefficient count expected by models; defaults to gram size

    @property
    def n(self) -> int:
        return self.n_out if self.n_out is not None else self.gram.shape[0]


def gram(metric: Metric, x: VectorTuple) -> np.ndarray:
    """Pairwise invariant scalar products; exact symmetry by mirroring i <= j."""
    n = x.n
    sig = metric.signature
    if x.d != metric.dim:
        raise ShapeError(f"tuple dimension {x.d} does not match metric dimension {metric.dim}")
    m = np.empty((n, n))
    weighted = x.vectors * sig
    for i in range(n):
        for j in range(i, n):
            m[i, j] = m[j, i] = float(np.dot(weighted[i], x.vectors[j]))
    return m


def subdeterminants(x: VectorTuple) -> dict:
    """All d x d column subdeterminants of the d x n matrix of vectors.

    Keys are ascending index d-subsets (0-based); columns are taken in
    ascending index order.
    """
    n, d = x.n, x.d
    if n < d:
        raise ShapeError(f"need at least d={d} vectors for subdeterminants, got n={n}")
    cols = x.vectors.T  # (d, n)
    out = {}
    for subset in itertools.combinations(range(n), d):
        out[subset] = float(np.linalg.det(cols[:, list(subset)]))
    return out


def translation_reduce(x: VectorTuple, pivot: str = FIRST_POSITION) -> VectorTuple:
    """Quotient by translations: difference positions against a pivot.

    FIRST_POSITION drops the pivot vector; CENTER_OF_POSITIONS keeps all
    positions as a zero-sum set. Free vectors pass through untouched and the
    output carries only free tags.
    """
    pos = x.position_indices()
    if pos.size == 0:
        raise RoleError("translation_reduce requires at least one position vector")
    if pivot == FIRST_POSITION:
        p0 = x.vectors[pos[0]]
        rows = []
        for i in range(x.n):
            if i == pos[0]:
                continue
            v = x.vectors[i]
            rows.append(v - p0 if x.roles[i] == POSITION else v)
        return VectorTuple(np.asarray(rows).reshape(len(rows), x.d))
    if pivot == CENTER_OF_POSITIONS:
        center = x.vectors[pos].mean(axis=0)
        out = x.vectors.copy()
        for i in pos:
            out[i] = out[i] - center
        return VectorTuple(out)
    raise ValueError(f"unknown pivot rule {pivot!r}")


@dataclass(frozen=True)
class OmegaSample:
    """Wrap-around band of a square matrix: entries (i, (i+s) mod n), s = 0..d."""

    n: int
    d: int
    entries: dict  # (i, j) -> value

    def __post_init__(self):
        if len(self.entries) != self.n * (self.d + 1):
            raise ShapeError(
                f"omega sample must hold n(d+1)={self.n * (self.d + 1)} entries, "
                f"got {len(self.entries)}"
            )


def omega_sample(m, d: int) -> OmegaSample:
    m = as_matrix(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ShapeError("omega_sample requires a square matrix")
    if n < d + 1:
        raise ShapeError(f"band of width d+1={d + 1} needs n >= d+1, got n={n}")
    entries = {}
    for i in range(n):
        for s in range(d + 1):
            j = (i + s) % n
            entries[(i, j)] = float(m[i, j])
    return OmegaSample(n, d, entries)


@dataclass(frozen=True)
class CompletionResult:
    matrix: np.ndarray
    converged: bool
    residual: float  # RMS misfit on the sampled entries
    iterations: int


def _propagated_factor(known: dict, n: int, d: int) -> np.ndarray | None:
    """Deterministic factor from the band: every (d+1)-window of consecutive
    indices has its full Gram submatrix sampled, so factor the first window
    and solve each later vector from its d inner products with predecessors.
    Returns (d, n) or None when a window system is singular."""
    idx = list(range(d + 1))
    g = np.array([[known[(min(a, b), max(a, b))] for b in idx] for a in idx])
    eigvals, eigvecs = np.linalg.eigh(0.5 * (g + g.T))
    order = np.argsort(eigvals)[::-1][:d]
    if eigvals[order].min() < -1e-8 * max(1.0, abs(eigvals).max()):
        return None
    v = (eigvecs[:, order] * np.sqrt(np.clip(eigvals[order], 0.0, None))).T  # (d, d+1)
    out = np.zeros((d, n))
    out[:, : d + 1] = v
    for j in range(d + 1, n):
        prev = list(range(j - d, j))
        a = out[:, prev].T  # (d, d)
        b = np.array([known[(p, j)] for p in prev])
        try:
            out[:, j] = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(out[:, j])):
            return None
    return out


def omega_complete(
    sample: OmegaSample,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-12,
    restarts: int = 8,
) -> CompletionResult:
    """Complete a rank-<=d matrix from its wrap-around band.

    Alternating least squares on M = W^T H with W, H of shape (d, n), fitted
    to the sampled entries and their transposes (the band comes from a
    symmetric matrix). The first attempt starts from a deterministic
    window-propagated factor (exact in the generic case); random restarts
    cover the rest. The output is symmetrized. Non-convergence is reported
    through the flag, never raised: degenerate inputs may legitimately fail.
    """
    n, d = sample.n, sample.d
    # Symmetric source matrix: constrain both (i, j) and (j, i).
    known = dict(sample.entries)
    for (i, j), v in sample.entries.items():
        known.setdefault((j, i), v)
    rows = [[] for _ in range(n)]  # j, value pairs per row i
    cols = [[] for _ in range(n)]
    for (i, j), v in known.items():
        rows[i].append((j, v))
        cols[j].append((i, v))
    scale = max(1.0, max(abs(v) for v in known.values()))
    rng = np.random.default_rng(seed)

    inits = []
    propagated = _propagated_factor(known, n, d)
    if propagated is not None:
        inits.append((propagated, propagated.copy()))
    while len(inits) < max(1, restarts) + (propagated is not None):
        inits.append((rng.standard_normal((d, n)), rng.standard_normal((d, n))))

    best = None
    total_iters = 0
    for w, h in inits:
        prev_obj = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            for mat_a, mat_b, index in ((w, h, rows), (h, w, cols)):
                # Solve each column of mat_a against fixed mat_b.
                for i in range(n):
                    js = [j for j, _ in index[i]]
                    vals = np.array([v for _, v in index[i]])
                    b = mat_b[:, js]  # (d, k)
                    gram_b = b @ b.T + 1e-12 * np.eye(d)
                    mat_a[:, i] = np.linalg.solve(gram_b, b @ vals)
            obj = sum(
                (w[:, i] @ h[:, j] - v) ** 2 for (i, j), v in known.items()
            )
            if obj <= (1e-10 * scale) ** 2 * len(known):
                break
            # Relative decrease test: an absolute test would stall runs that
            # are still converging geometrically toward a tiny objective.
            if prev_obj - obj < tol * max(obj, 1e-30):
                break
            prev_obj = obj
        total_iters += it
        m_hat = w.T @ h
        m_hat = 0.5 * (m_hat + m_hat.T)
        residual = float(
            np.sqrt(np.mean([(m_hat[i, j] - v) ** 2 for (i, j), v in known.items()]))
        )
        if best is None or residual < best.residual:
            best = CompletionResult(m_hat, residual <= 1e-8 * scale, residual, total_iters)
        if best.converged:
            break
    return CompletionResult(best.matrix, best.converged, best.residual, total_iters)


def cholesky_reconstruct(m) -> VectorTuple:
    """Vectors whose Euclidean Gram equals m, canonical up to O(n).

    Uses the symmetric eigendecomposition (a Cholesky-style square root that
    tolerates rank deficiency): eigenvalues sorted descending, so a rank-r
    input yields vectors supported on the first r ambient coordinates.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ShapeError("gram matrix must be square")
    sym = 0.5 * (m + m.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    floor = -1e-9 * max(1.0, float(np.max(np.abs(eigvals))))
    if eigvals.min() < floor:
        raise IndefiniteMatrixError(float(eigvals.min()))
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    factor = eigvecs * np.sqrt(eigvals)  # (n, n); row i is vector v_i
    return VectorTuple(factor)


@dataclass(frozen=True)
class OrthogonalizationResult:
    tuple: VectorTuple
    restarts: int


def lorentz_orthogonalize(x: VectorTuple, rng) -> OrthogonalizationResult:
    """Gram-Schmidt under the Minkowski inner product.

    If an intermediate vector comes out lightlike, the not-yet-processed
    inputs are re-mixed with random coefficients and that block restarts;
    persistent degeneracy (measure zero for independent inputs) raises.
    """
    n, d = x.n, x.d
    if n > d:
        raise DegenerateInputError(f"{n} vectors in dimension {d} cannot be independent")
    sig = Metric(MINKOWSKI, d).signature
    if np.linalg.matrix_rank(x.vectors, tol=1e-10) < n:
        raise DegenerateInputError("input vectors are linearly dependent")

    def mink(a, b):
        return float(np.dot(a * sig, b))

    w = x.vectors.copy()
    u = np.zeros_like(w)
    restarts = 0
    j = 0
    while j < n:
        uj = w[j].copy()
        for k in range(j):
            uj -= (mink(w[j], u[k]) / mink(u[k], u[k])) * u[k]
        if abs(mink(uj, uj)) < LIGHTLIKE_REL_TOL * float(np.dot(uj, uj)):
            restarts += 1
            if restarts > MAX_GS_RESTARTS:
                raise DegenerateInputError(
                    f"lightlike degeneracy persisted through {MAX_GS_RESTARTS} restarts"
                )
            # Random full-rank re-mix of the remaining inputs; retry until the
            # mixing matrix is comfortably invertible.
            block = n - j
            mix = rng.standard_normal((block, block))
            while abs(np.linalg.det(mix)) < 1e-6:
                mix = rng.standard_normal((block, block))
            w[j:] = mix @ w[j:]
            continue
        u[j] = uj
        j += 1
    return OrthogonalizationResult(VectorTuple(u, x.roles), restarts)
