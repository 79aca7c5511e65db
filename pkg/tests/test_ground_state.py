import numpy as np
import pytest
from sklearn.base import clone

from prhartree.grid import Grid
from prhartree.ground_state import (
    ConvergenceError,
    GroundStateSolver,
    decay_report,
    mu_predicted,
    shell_average,
    solve_q,
    symmetrize,
    weighted_moment,
)

# radial oracle (sine-basis reduction, 16384 nodes on (0, 320)), frozen
RADIAL_ASTAR = 2.6922191597587477
RADIAL_M2 = 6.0533399993019605
RADIAL_M_HALF = 2.91386342307996


def test_radial_oracle_reproduces_frozen_values(radial):
    assert radial.mass == pytest.approx(RADIAL_ASTAR, rel=1e-12)
    assert radial.moment(2) == pytest.approx(RADIAL_M2, rel=1e-12)
    # its own Pohozaev identities hold to its discretisation error
    assert radial.riesz_half() / radial.mass == pytest.approx(1.0, abs=2e-4)
    assert radial.hartree() / (2 * radial.mass) == pytest.approx(1.0, abs=2e-4)


def test_critical_mass_agrees_with_radial_oracle(q96):
    assert q96.astar == pytest.approx(RADIAL_ASTAR, rel=5e-4)


def test_moments_agree_with_radial_oracle(q96):
    assert weighted_moment(q96, 2) == pytest.approx(RADIAL_M2, rel=1e-2)
    assert weighted_moment(q96, 0.5) == pytest.approx(RADIAL_M_HALF, rel=2e-2)


def test_ground_state_certifies(q96):
    assert q96.certify() == []
    assert q96.residual <= 1e-7
    assert np.all(q96.q.values > 0)


def test_ground_state_is_radial(q96):
    u = q96.q.values
    assert np.max(np.abs(symmetrize(u) - u)) < 1e-12
    r, v = shell_average(u, q96.grid)
    assert np.all(np.diff(v[r < 10]) < 0)


def test_symmetrize_is_a_projection(rng):
    u = rng.standard_normal((8, 8, 8))
    s = symmetrize(u)
    assert np.max(np.abs(symmetrize(s) - s)) < 1e-13
    # invariant under the lattice reflection i -> -i mod n and axis swaps
    assert np.max(np.abs(np.roll(np.flip(s, 0), 1, 0) - s)) < 1e-13
    assert np.max(np.abs(np.transpose(s, (2, 0, 1)) - s)) < 1e-13


def test_decay_report_window_validation(q96):
    L = q96.grid.L
    assert decay_report(q96) == pytest.approx(q96.decay_slope)
    with pytest.raises(ValueError):
        decay_report(q96, (0.1 * L, 0.5 * L))
    with pytest.raises(ValueError):
        decay_report(q96, (0.5 * L, 0.4 * L))


def test_weighted_moment_range(q96):
    with pytest.raises(ValueError):
        weighted_moment(q96, 3.0)
    assert weighted_moment(q96, 0) == pytest.approx(q96.astar)


def test_mu_predicted(q96):
    mu = mu_predicted(1.0, 2.0, q96)
    assert mu == pytest.approx((2 * weighted_moment(q96, 2)) ** (1 / 3))
    with pytest.raises(ValueError):
        mu_predicted(float("inf"), 2.0, q96)
    with pytest.raises(ValueError):
        mu_predicted(1.0, 0.0, q96)


def test_iteration_cap_raises():
    with pytest.raises(ConvergenceError):
        solve_q(Grid(16, 6.0), tol=1e-12, max_iter=3)
    with pytest.raises(ValueError):
        solve_q(Grid(16, 6.0), tol=0.0)


def test_estimator_interface():
    est = GroundStateSolver(n=32, L=10.0, tol=1e-4)
    assert est.get_params() == {"n": 32, "L": 10.0, "tol": 1e-4, "max_iter": 1000}
    twin = clone(est).set_params(max_iter=500)
    assert twin.max_iter == 500 and est.max_iter == 1000
    est.fit()
    assert est.astar_ == pytest.approx(RADIAL_ASTAR, rel=0.05)
    assert est.q_.shape == (32, 32, 32)
    assert isinstance(est.certify(), list)
