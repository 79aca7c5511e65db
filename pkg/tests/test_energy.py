import math

import numpy as np
import pytest

from prhartree.energy import (
    MassConstraintError,
    PotentialSpec,
    hartree_term,
    potential_eval,
    total_energy,
    weinstein,
)
from prhartree.grid import Grid, l2norm


def test_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec((), ())
    with pytest.raises(ValueError):
        PotentialSpec(((0, 0, 0),), (2.0, 1.0))
    with pytest.raises(ValueError):
        PotentialSpec(((0, 0),), (2.0,))
    with pytest.raises(ValueError):
        PotentialSpec(((0, 0, 0),), (0.0,))
    with pytest.raises(ValueError):
        PotentialSpec(((0, 0, 0), (0, 0, 0)), (1.0, 1.0))


def test_flatness_two_equal_traps():
    # V = |x - x1|^2 |x - x2|^2 with |x1 - x2| = 2: both points have kappa = 4
    s = PotentialSpec(((-1, 0, 0), (1, 0, 0)), (2.0, 2.0))
    assert s.p == 2.0
    assert s.kappas == (4.0, 4.0)
    assert s.Z == ((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0))


def test_flatness_unequal_exponents():
    # only the point carrying the largest exponent is flat of order p
    s = PotentialSpec(((0, 0, 0), (3, 0, 0)), (1.0, 2.0))
    assert s.p == 2.0
    assert s.kappas[0] == math.inf
    assert s.kappas[1] == pytest.approx(3.0)
    assert s.Z == ((3.0, 0.0, 0.0),)


def test_flatness_three_traps_selects_minimum():
    s = PotentialSpec(((0, 0, 0), (1, 0, 0), (0, 3, 0)), (2.0, 2.0, 2.0))
    k = s.kappas
    assert k[0] == pytest.approx(1.0 * 9.0)
    assert k[1] == pytest.approx(1.0 * 10.0)
    assert k[2] == pytest.approx(9.0 * 10.0)
    assert s.Z == ((0.0, 0.0, 0.0),)


def test_flatness_is_the_local_limit():
    s = PotentialSpec(((0, 0, 0), (1.5, -0.5, 0.25)), (1.5, 1.5))
    d = np.array([0.3, -0.2, 0.9])
    d /= np.linalg.norm(d)
    t = 1e-6
    x = np.array(s.points[0]) + t * d
    assert s(*x) / t**1.5 == pytest.approx(s.kappas[0], rel=1e-5)


def test_potential_sampling_and_margin():
    g = Grid(16, 4.0)
    V = potential_eval(PotentialSpec.single(2.0), g)
    assert np.allclose(V, g.radius**2)
    with pytest.raises(ValueError):
        potential_eval(PotentialSpec.single(2.0, (3.5, 0, 0)), g)


def test_total_energy_requires_unit_mass():
    g = Grid(16, 4.0)
    u = np.exp(-g.radius**2)
    with pytest.raises(MassConstraintError):
        total_energy(u, g, 1.0, 0.0, PotentialSpec.single())
    b = total_energy(u, g, 1.0, 0.0, PotentialSpec.single(), constrained=False)
    assert b.total == pytest.approx(b.kinetic + b.potential - 0.5 * b.hartree)
    with pytest.raises(ValueError):
        total_energy(u / l2norm(u, g), g, 1.0, 0.0)


def test_breakdown_scaling_in_coupling():
    g = Grid(16, 4.0)
    u = np.exp(-g.radius**2)
    u /= l2norm(u, g)
    spec = PotentialSpec.single()
    e1 = total_energy(u, g, 1.0, 0.5, spec)
    e3 = total_energy(u, g, 3.0, 0.5, spec)
    assert e1.total - e3.total == pytest.approx(e1.hartree, rel=1e-12)
    assert set(e1.as_dict()) == {"kinetic", "potential", "hartree", "total", "a", "m"}


def test_hartree_term_is_quartic():
    g = Grid(16, 4.0)
    u = np.exp(-g.radius**2)
    assert hartree_term(2 * u, g) == pytest.approx(16 * hartree_term(u, g), rel=1e-12)


def test_weinstein_is_amplitude_invariant_and_undefined_at_zero():
    g = Grid(16, 4.0)
    u = np.exp(-g.radius**2 / 2)
    assert weinstein(3 * u, g) == pytest.approx(weinstein(u, g), rel=1e-12)
    with pytest.raises(ZeroDivisionError):
        weinstein(np.zeros(g.shape), g)


def test_weinstein_at_ground_state(q96):
    assert weinstein(q96.q, q96.grid) == pytest.approx(q96.astar / 2, rel=1e-3)
