"""Reference physics expressions built purely from invariant scalars.

Newtonian total mechanical energy (verbatim ordered double sum), the
electromagnetic force on a test particle in both the double-cross-product
form and the expanded scalar form, and the vector triple-product identity
connecting them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import generalized_cross
from .core import as_vector
from .errors import DegenerateInputError, ShapeError


@dataclass(frozen=True)
class Particle:
    r: np.ndarray
    v: np.ndarray
    mass: float = 1.0
    charge: float = 0.0

    def __post_init__(self):
        r = as_vector(self.r)
        v = as_vector(self.v, r.size)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)


def total_energy(particles, G: float) -> float:
    """Kinetic plus pairwise gravitational potential energy.

    The ordered double sum counts each unordered pair twice; implemented
    exactly as written, without a 1/2 pair correction.
    """
    t = 0.0
    for p in particles:
        t += 0.5 * p.mass * float(np.dot(p.v, p.v))
    for i, pi in enumerate(particles):
        for j, pj in enumerate(particles):
            if i == j:
                continue
            sep = float(np.linalg.norm(pi.r - pj.r))
            if sep == 0.0:
                raise DegenerateInputError(f"particles {i} and {j} have coincident positions")
            t -= G * pi.mass * pj.mass / sep
    return t


def _check_em_inputs(test, sources):
    if test.r.size != 3:
        raise ShapeError("electromagnetic force is defined for d=3")
    for i, s in enumerate(sources):
        if s.r.size != 3:
            raise ShapeError("electromagnetic force is defined for d=3")
        if np.array_equal(s.r, test.r):
            raise DegenerateInputError(f"source {i} coincides with the test particle position")


def em_force_cross(test: Particle, sources, k: float, c: float) -> np.ndarray:
    """Coulomb plus magnetic force, magnetic term as v x (v_i x (r - r_i))."""
    _check_em_inputs(test, sources)
    f = np.zeros(3)
    for s in sources:
        delta = test.r - s.r
        dist3 = float(np.linalg.norm(delta)) ** 3
        f += k * test.charge * s.charge * delta / dist3
        f += (
            k
            * test.charge
            * s.charge
            * generalized_cross([test.v, generalized_cross([s.v, delta])])
            / (c**2 * dist3)
        )
    return f


def em_force_scalar(test: Particle, sources, k: float, c: float) -> np.ndarray:
    """Same force with the triple product expanded: no cross products anywhere."""
    _check_em_inputs(test, sources)
    f = np.zeros(3)
    for s in sources:
        delta = test.r - s.r
        dist3 = float(np.linalg.norm(delta)) ** 3
        vv = float(np.dot(test.v, s.v))
        vd = float(np.dot(test.v, delta))
        f += k * test.charge * s.charge * (1.0 - vv / c**2) * delta / dist3
        f += k * test.charge * s.charge * vd * s.v / (c**2 * dist3)
    return f


def triple_product_check(a, b, c) -> float:
    """Max-norm of a x (b x c) - [(a.c) b - (a.b) c]; identically zero in exact arithmetic."""
    a = as_vector(a, 3)
    b = as_vector(b, 3)
    c = as_vector(c, 3)
    lhs = generalized_cross([a, generalized_cross([b, c])])
    rhs = float(np.dot(a, c)) * b - float(np.dot(a, b)) * c
    return float(np.max(np.abs(lhs - rhs)))
