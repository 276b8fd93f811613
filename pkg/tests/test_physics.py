import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equiscalar import groups, physics
from equiscalar.errors import DegenerateInputError, ShapeError


def _particle(rng, charge=1.0):
    return physics.Particle(
        rng.standard_normal(3), rng.standard_normal(3), mass=1.0, charge=charge
    )


# -- total_energy --------------------------------------------------------------


def test_energy_two_rest_particles():
    p = [
        physics.Particle([0.0, 0, 0], [0.0, 0, 0]),
        physics.Particle([1.0, 0, 0], [0.0, 0, 0]),
    ]
    # The ordered double sum visits the pair twice: -2 G m^2 / r.
    assert physics.total_energy(p, G=1.0) == pytest.approx(-2.0)


def test_energy_kinetic_term():
    p = [physics.Particle([0.0, 0, 0], [1.0, 2.0, 2.0], mass=2.0)]
    assert physics.total_energy(p, G=1.0) == pytest.approx(9.0)


def test_energy_euclidean_invariance():
    rng = groups.make_rng(0)
    parts = [_particle(rng) for _ in range(4)]
    e0 = physics.total_energy(parts, G=0.7)
    q = groups.sample_orthogonal(rng, 3)
    w = rng.standard_normal(3)
    moved = [
        physics.Particle(q.q @ p.r + w, q.q @ p.v, p.mass, p.charge) for p in parts
    ]
    assert physics.total_energy(moved, G=0.7) == pytest.approx(e0, rel=1e-12)


def test_energy_coincident_positions_raise():
    p = [
        physics.Particle([1.0, 0, 0], [0.0, 0, 0]),
        physics.Particle([1.0, 0, 0], [0.0, 0, 0]),
    ]
    with pytest.raises(DegenerateInputError):
        physics.total_energy(p, G=1.0)


# -- electromagnetic force ------------------------------------------------------


def test_em_static_coulomb_hand_value():
    test = physics.Particle([0.0, 0, 0], [0.0, 0, 0], charge=1.0)
    src = physics.Particle([-1.0, 0, 0], [0.0, 0, 0], charge=1.0)
    f = physics.em_force_cross(test, [src], k=1.0, c=1.0)
    assert np.allclose(f, [1.0, 0.0, 0.0], atol=1e-14)


def test_em_cross_and_scalar_forms_agree():
    rng = np.random.default_rng(1)
    for _ in range(100):
        test = _particle(rng, charge=float(rng.standard_normal()))
        sources = [_particle(rng, charge=float(rng.standard_normal())) for _ in range(3)]
        a = physics.em_force_cross(test, sources, k=1.3, c=2.0)
        b = physics.em_force_scalar(test, sources, k=1.3, c=2.0)
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_em_force_rotation_equivariance():
    rng = groups.make_rng(2)
    test = _particle(rng)
    sources = [_particle(rng, charge=-1.0) for _ in range(2)]
    f = physics.em_force_scalar(test, sources, k=1.0, c=3.0)
    for _ in range(20):
        q = groups.sample_orthogonal(rng, 3).q
        rot_test = physics.Particle(q @ test.r, q @ test.v, test.mass, test.charge)
        rot_sources = [
            physics.Particle(q @ s.r, q @ s.v, s.mass, s.charge) for s in sources
        ]
        g = physics.em_force_scalar(rot_test, rot_sources, k=1.0, c=3.0)
        assert np.max(np.abs(g - q @ f)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


def test_em_force_translation_invariance():
    rng = np.random.default_rng(3)
    test = _particle(rng)
    sources = [_particle(rng) for _ in range(2)]
    f = physics.em_force_cross(test, sources, k=1.0, c=1.0)
    w = rng.standard_normal(3)
    shifted_test = physics.Particle(test.r + w, test.v, charge=test.charge)
    shifted_sources = [
        physics.Particle(s.r + w, s.v, charge=s.charge) for s in sources
    ]
    g = physics.em_force_cross(shifted_test, shifted_sources, k=1.0, c=1.0)
    assert np.max(np.abs(g - f)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


def test_em_requires_d3():
    test = physics.Particle([0.0, 0], [0.0, 0])
    src = physics.Particle([1.0, 0], [0.0, 0])
    with pytest.raises(ShapeError):
        physics.em_force_cross(test, [src], k=1.0, c=1.0)


def test_em_coincident_source_raises():
    test = physics.Particle([1.0, 2, 3], [0.0, 0, 0])
    src = physics.Particle([1.0, 2, 3], [1.0, 0, 0])
    with pytest.raises(DegenerateInputError):
        physics.em_force_scalar(test, [src], k=1.0, c=1.0)


# -- triple product identity ----------------------------------------------------


@settings(deadline=None, max_examples=100)
@given(
    st.lists(
        st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=9, max_size=9
    )
)
def test_triple_product_identity(flat):
    a, b, c = np.array(flat).reshape(3, 3)
    scale = max(1.0, np.max(np.abs(flat)) ** 3)
    assert physics.triple_product_check(a, b, c) <= 1e-12 * scale
