import numpy as np
import pytest
import scipy.linalg
from sklearn.base import clone

from conftest import SWEEP_FRACTIONS
from oracles import dense_operator, lattice_xi2
from prhartree.energy import PotentialSpec
from prhartree.grid import Grid, l2norm, mass
from prhartree.minimizer import (
    GUARD_BAND,
    HartreeMinimizer,
    SweepError,
    ThresholdError,
    abs_comparison,
    minimize,
    nonexistence_probe,
    smooth_cutoff,
    spectral_tail,
    sweep,
    trial_energy,
    trial_state,
)
from prhartree.operators import riesz_form


def linear_ground_energy(grid, m, V):
    H = dense_operator(grid, np.sqrt(lattice_xi2(grid) + m * m)) + np.diag(V.ravel())
    return scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=[0, 0])[0]


@pytest.mark.filterwarnings("ignore::prhartree.minimizer.UnresolvedStateWarning")
def test_linear_limit_matches_dense_eigensolver():
    g = Grid(8, 3.0)
    spec = PotentialSpec.single(2.0)
    res = minimize(0.0, 1.0, spec, g, tol=1e-7)
    ref = linear_ground_energy(g, 1.0, g.radius**2)
    assert abs(res.e_a - ref) / abs(ref) < 1e-8
    # at a = 0 the multiplier is the eigenvalue as well
    assert abs(res.mu_a - ref) / abs(ref) < 1e-8


@pytest.mark.filterwarnings("ignore::prhartree.minimizer.UnresolvedStateWarning")
def test_plain_gradient_flow_reaches_the_same_state():
    g = Grid(8, 3.0)
    spec = PotentialSpec.single(2.0)
    a = minimize(0.0, 1.0, spec, g, tol=1e-7, precondition=False, max_iter=20000)
    b = minimize(0.0, 1.0, spec, g, tol=1e-7)
    assert a.e_a == pytest.approx(b.e_a, rel=1e-10)


def test_guard_band_and_input_checks():
    g = Grid(16, 3.0)
    spec = PotentialSpec.single()
    with pytest.raises(ThresholdError, match="no minimizer"):
        minimize(GUARD_BAND * 2.7, 0.0, spec, g, astar=2.7)
    with pytest.raises(ValueError):
        minimize(-0.1, 0.0, spec, g)
    with pytest.raises(ValueError):
        minimize(1.0, 0.0, spec, g, init=np.ones(g.shape))
    with pytest.raises(ValueError):
        minimize(1.0, 0.0, spec, g, tau0=-1.0)


def test_single_entry_sweep_equals_minimize():
    g = Grid(16, 3.0)
    spec = PotentialSpec.single()
    direct = minimize(1.2, 0.0, spec, g)
    (swept,) = sweep([1.2], 0.0, spec, g)
    assert swept.e_a == direct.e_a
    assert np.array_equal(swept.u.values, direct.u.values)


def test_sweep_argument_checks():
    g = Grid(16, 3.0)
    spec = PotentialSpec.single()
    with pytest.raises(ValueError):
        sweep([1.0, 0.5], 0.0, spec, g)
    with pytest.raises(ThresholdError):
        sweep([1.0, 2.69], 0.0, spec, g, astar=2.7)
    assert sweep([], 0.0, spec, g) == []
    with pytest.raises(SweepError) as info:
        sweep([0.5, 1.0], 0.0, spec, g, max_iter=1)
    assert info.value.a == 0.5


def test_minimizer_invariants(sweep_results):
    for r in sweep_results.values():
        assert abs(mass(r.u.values, r.u.grid) - 1) < 1e-10
        assert r.u.values.min() >= -1e-10
        assert r.residual <= 1e-6
        assert abs(r.mu_a - r.mu_check) <= 1e-6 * abs(r.mu_a)
        h = np.array(r.energy_history)
        assert np.all(np.diff(h) <= 0)


def test_energy_nonnegative_and_decreasing(sweep_results):
    e = [sweep_results[f].e_a for f in SWEEP_FRACTIONS]
    assert min(e) >= 0
    assert all(b <= a for a, b in zip(e, e[1:]))


def test_hartree_grows_towards_threshold(sweep_results):
    h = [sweep_results[f].breakdown.hartree for f in SWEEP_FRACTIONS if f >= 0.8]
    assert all(b >= a for a, b in zip(h, h[1:]))


def test_half_derivative_norm_blows_up(sweep_results, sweep_grid):
    lo = riesz_form(sweep_results[0.8].u, sweep_grid, 0.5)
    hi = riesz_form(sweep_results[0.98].u, sweep_grid, 0.5)
    assert hi >= 2 * lo


def test_scaled_multiplier_is_negative_and_bounded(sweep_results, q96):
    fr = [f for f in SWEEP_FRACTIONS if f >= 0.8]
    lam = np.array([(q96.astar * (1 - f)) ** (1 / 3) for f in fr])
    lm = lam * np.array([sweep_results[f].mu_a for f in fr])
    # bound from the straight-line extrapolation of lambda*mu to lambda = 0
    c1, c0 = np.polyfit(lam, lm, 1)
    B = 1.1 * abs(c0)
    assert np.all(lm < 0)
    assert np.all(lm >= -B)


def test_states_are_resolved(sweep_results):
    assert max(r.spectral_tail for r in sweep_results.values()) < 1e-2


def test_spectral_tail_detects_grid_scale_spike():
    g = Grid(16, 3.0)
    smooth = np.exp(-g.radius**2)
    spike = np.zeros(g.shape)
    spike[8, 8, 8] = 1.0
    assert spectral_tail(smooth, g) < 1e-6
    assert spectral_tail(spike, g) > 0.5


@pytest.mark.slow
def test_warm_start_saves_iterations(q96, harmonic, sweep_grid):
    a = [f * q96.astar for f in (0.8, 0.9, 0.95, 0.98)]
    warm = sweep(a, 0.0, harmonic, sweep_grid, astar=q96.astar)
    cold = sweep(a, 0.0, harmonic, sweep_grid, astar=q96.astar, warm_start=False)
    assert sum(r.iterations for r in warm) < sum(r.iterations for r in cold)
    for w, c in zip(warm, cold):
        assert w.e_a == pytest.approx(c.e_a, rel=1e-6)


def test_smooth_cutoff_profile():
    r = np.linspace(0, 5, 501)
    phi = smooth_cutoff(r, 1.5)
    assert np.all(phi[r <= 1.5] == 1.0)
    assert np.all(phi[r >= 3.0] == 0.0)
    assert np.all(np.diff(phi) <= 0)
    assert smooth_cutoff(2.25, 1.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        smooth_cutoff(r, 0.0)


def test_trial_state_normalisation(q96):
    for R in (1.0, 3.0, 8.0):
        t = trial_state(R, (0, 0, 0), 1.0, q96)
        assert abs(t.field.mass - 1) < 1e-12
        assert t.A_R >= 1


def test_trial_state_normalisation_constant(q96):
    for R in (4.0, 6.0):
        A2 = trial_state(R, (0, 0, 0), 2.0, q96).A_R ** 2
        assert 1.0 <= A2 <= 1.01
    e4 = trial_state(4.0, (0, 0, 0), 1.0, q96).A_R ** 2 - 1
    e8 = trial_state(8.0, (0, 0, 0), 1.0, q96).A_R ** 2 - 1
    assert e4 / e8 >= 16


def test_trial_state_excess_follows_inverse_fifth_power(q96):
    # cutoff support 2R stays inside the ground-state box for every R here
    R = np.array([3.0, 4.0, 5.0, 6.0, 8.0])
    ex = np.array([trial_state(r, (0, 0, 0), 1.0, q96).A_R ** 2 - 1 for r in R])
    assert np.all(ex > 0)
    scaled = ex * R**5
    C = scaled.max()
    assert np.all(ex <= C * R**-5)
    # a genuine inverse fifth power keeps the fitted constant nearly flat
    assert C / scaled.min() <= 1.5


def test_trial_state_argument_checks(q96):
    with pytest.raises(ValueError):
        trial_state(0.5, (0, 0, 0), 1.0, q96)
    with pytest.raises(ValueError, match="exceeds"):
        trial_state(16.0, (0, 0, 0), 1.0, q96)
    with pytest.raises(ValueError):
        trial_state(1.0, (2.5, 0, 0), 1.0, q96, grid=Grid(32, 3.0))


def test_trial_state_on_a_physical_grid(q96, harmonic):
    native = trial_state(1.0, (0, 0, 0), 2.0, q96)
    sampled = trial_state(1.0, (0, 0, 0), 2.0, q96, grid=Grid(64, 12.0))
    a = 0.5 * q96.astar
    e1 = trial_energy(a, 0.0, harmonic, native)
    e2 = trial_energy(a, 0.0, harmonic, sampled)
    assert e2.kinetic == pytest.approx(e1.kinetic, rel=2e-3)
    assert e2.hartree == pytest.approx(e1.hartree, rel=2e-3)
    assert e2.potential == pytest.approx(e1.potential, rel=2e-3)


def test_trial_energy_near_and_above_threshold(q96, harmonic):
    AS = q96.astar
    trials = {R: trial_state(R, (0, 0, 0), 0.75, q96) for R in (4.0, 8.0, 16.0)}
    pot = {R: trial_energy(AS, 0.0, harmonic, t).potential for R, t in trials.items()}
    assert pot[8.0] <= 0.05 and pot[16.0] <= 0.05
    at = [trial_energy(AS, 0.0, harmonic, trials[R]).total for R in (4.0, 8.0, 16.0)]
    assert all(0 < b < a for a, b in zip(at, at[1:]))
    assert at[-1] < 0.02
    above = [trial_energy(1.2 * AS, 0.0, harmonic, trials[R]).total for R in (4.0, 8.0, 16.0)]
    assert above[2] < above[1] < above[0]
    b = trial_energy(1.5 * AS, 0.0, harmonic, trials[16.0])
    leading = 16.0 / (2 * AS) * (1 - 1.5) * q96.hartree
    assert b.kinetic - 0.75 * AS * b.hartree == pytest.approx(leading, rel=0.01)


def test_trial_energy_with_mass_term(q96, harmonic):
    t = trial_state(8.0, (0, 0, 0), 1.0, q96)
    e0 = trial_energy(q96.astar, 0.0, harmonic, t)
    e1 = trial_energy(q96.astar, 1.0, harmonic, t)
    # sqrt(k^2 + m^2) - k <= m^2/(2k), so the mass costs at most m^2/2 <k^-1>
    assert 0 < e1.kinetic - e0.kinetic < 0.5 * riesz_form(t.field, t.grid, -0.5) + 1e-10


def test_nonexistence_probe(q96, harmonic):
    AS = q96.astar
    with pytest.raises(ValueError):
        nonexistence_probe(0.9 * AS, 0.0, harmonic, [2, 4], q96)
    flat = nonexistence_probe(AS, 0.0, harmonic, [2, 4, 8, 16], q96)
    assert abs(flat.coefficient) <= 0.02 * q96.hartree / (2 * AS)
    steep = nonexistence_probe(1.5 * AS, 0.0, harmonic, [2, 4, 8, 16], q96)
    assert steep.coefficient < 0
    assert steep.coefficient == pytest.approx(steep.expected, rel=0.02)
    assert len(steep.rows) == 4
    again = nonexistence_probe(1.5 * AS, 0.0, harmonic, [2, 4, 8, 16], q96)
    assert again.as_dict() == steep.as_dict()


def test_abs_comparison_on_nonnegative_field():
    g = Grid(16, 4.0)
    u = np.exp(-g.radius**2 / 2)
    u /= l2norm(u, g)
    e, e_abs = abs_comparison(u, 1.0, 0.5, PotentialSpec.single(), g)
    assert abs(e - e_abs) < 1e-12


def test_abs_comparison_strict_on_dipole():
    g = Grid(16, 4.0)
    X, _, _ = g.coords()
    u = X * np.exp(-g.radius**2 / 2)
    u /= l2norm(u, g)
    e, e_abs = abs_comparison(u, 1.0, 0.5, PotentialSpec.single(), g)
    assert e_abs < e - 1e-3


def test_hartree_minimizer_estimator(q96):
    est = HartreeMinimizer(n=16, L=3.0, astar=q96.astar)
    assert set(est.get_params()) == {"n", "L", "m", "p", "center", "astar", "tol", "max_iter"}
    assert clone(est).get_params()["n"] == 16
    a = np.array([0.3, 0.6]) * q96.astar
    est.fit(a)
    e = est.predict(a)
    assert e[1] < e[0]
    assert est.transform(a[:1]).shape == (1, 16, 16, 16)
    with pytest.raises(ValueError):
        est.predict([0.45 * q96.astar])
