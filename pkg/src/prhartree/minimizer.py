"""Constrained minimisation of the Hartree energy on the unit sphere of L^2.

Also houses the trial family ``U_R`` built from the ground state and the
descent probe used above the critical coupling.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .energy import EnergyBreakdown, PotentialSpec, potential_eval, total_energy
from .grid import Field, Grid, check_field, inner, integrate, l2norm, mass, trig_interpolate
from .ground_state import ConvergenceError, QState
from .operators import apply_multiplier, hartree_potential, kinetic_symbol

logger = logging.getLogger(__name__)

__all__ = [
    "ThresholdError",
    "UnresolvedStateWarning",
    "spectral_tail",
    "MinimizerResult",
    "SweepError",
    "TrialState",
    "DescentReport",
    "minimize",
    "sweep",
    "smooth_cutoff",
    "trial_state",
    "trial_energy",
    "nonexistence_probe",
    "abs_comparison",
    "HartreeMinimizer",
]

GUARD_BAND = 0.995
TAIL_WARN = 1e-2


class UnresolvedStateWarning(UserWarning):
    """A minimiser has collapsed towards the grid scale."""


def spectral_tail(u, grid: Grid) -> float:
    """Share of ``||u||^2`` carried by ``|xi| > (2/3) max |xi|`` per axis."""
    u = check_field(u, grid)
    uh = np.abs(np.fft.rfftn(u)) ** 2 * grid.rfft_weights
    cut = (2.0 / 3.0) * np.pi / grid.h
    f, r = np.abs(grid.freqs), np.abs(grid._rfreqs)
    outer = (f[:, None, None] > cut) | (f[None, :, None] > cut) | (r[None, None, :] > cut)
    return float(uh[outer].sum() / uh.sum())


class ThresholdError(ValueError):
    """The coupling is at or above the range where minimisers exist."""


class SweepError(RuntimeError):
    def __init__(self, a, cause):
        super().__init__(f"minimisation failed at a={a!r}: {cause}")
        self.a = a
        self.cause = cause


@dataclass(frozen=True)
class MinimizerResult:
    u: Field
    breakdown: EnergyBreakdown
    mu_a: float
    iterations: int
    residual: float
    energy_history: tuple[float, ...] = field(default=(), repr=False)
    spectral_tail: float = float("nan")

    @property
    def e_a(self) -> float:
        return self.breakdown.total

    @property
    def a(self) -> float:
        return self.breakdown.a

    @property
    def m(self) -> float:
        return self.breakdown.m

    @property
    def mu_check(self) -> float:
        """Multiplier from ``e(a) - (a/2) * hartree``."""
        return self.e_a - 0.5 * self.a * self.breakdown.hartree

    def row(self) -> dict:
        b = self.breakdown
        return {
            "a": b.a, "e_a": b.total, "kinetic": b.kinetic, "potential": b.potential,
            "hartree": b.hartree, "mu_a": self.mu_a, "residual": self.residual,
            "iterations": self.iterations,
        }


class _Problem:
    """Energy and sphere gradient for fixed ``(a, m, V)`` on one grid."""

    def __init__(self, grid, a, m, V):
        self.grid = grid
        self.a = float(a)
        self.m = float(m)
        self.V = V
        self.ksym = kinetic_symbol(grid, m)

    def evaluate(self, u):
        g = self.grid
        Ku = apply_multiplier(u, self.ksym)
        phi = hartree_potential(u, g)
        kin = inner(Ku, u, g)
        pot = integrate(self.V * u * u, g)
        har = integrate(phi * u * u, g)
        E = kin + pot - 0.5 * self.a * har
        G = Ku + self.V * u - self.a * phi * u
        return E, G, (kin, pot, har)


def _normalize(u, grid):
    return u / l2norm(u, grid)


def _default_init(grid, spec):
    c = np.asarray(spec.Z[0])
    X, Y, Z = grid.coords()
    r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
    w = min(1.0, grid.L / 6)
    return _normalize(np.exp(-r2 / (2 * w * w)), grid)


def minimize(a: float, m: float, spec: PotentialSpec, grid: Grid, init=None,
             tol: float = 1e-6, max_iter: int = 3000, astar: float | None = None,
             precondition: bool = True, tau0: float | None = None) -> MinimizerResult:
    """Minimise ``E_a`` over unit-mass fields by a projected descent flow.

    The search direction is the (preconditioned) sphere gradient
    ``G - <G, u> u`` with ``G = sqrt(-Lap+m^2) u + V u - a (|x|^-1*u^2) u``,
    combined Polak-Ribiere style with the previous direction.  Every accepted
    step lowers the energy.  Stops once ``||G - <G,u> u||_2 <= tol``.

    ``astar`` enables the threshold guard ``a < 0.995 a*``.  ``tau0`` is the
    first trial step; later steps start from twice the last accepted one.
    """
    if a < 0:
        raise ValueError("coupling a must be nonnegative")
    if astar is not None and a >= GUARD_BAND * astar:
        raise ThresholdError(
            f"a={a:.6g} is not below {GUARD_BAND} a* = {GUARD_BAND * astar:.6g}; "
            "for a >= a* there is no minimizer (the energy is unbounded along "
            "concentrating trial states)"
        )
    V = potential_eval(spec, grid)
    if init is None:
        u = _default_init(grid, spec)
    else:
        u = check_field(init.u if isinstance(init, MinimizerResult) else init, grid, "init")
        if abs(mass(u, grid) - 1.0) > 1e-8:
            raise ValueError("init must have unit mass")
        u = _normalize(u, grid)
    prob = _Problem(grid, a, m, V)

    # kinetic part of the Hessian as preconditioner; the shift tracks |mu|
    kmax = float(np.sqrt(3.0) * np.pi / grid.h + abs(m))
    E, G, _ = prob.evaluate(u)
    mu = inner(G, u, grid)
    gproj = G - mu * u
    res = l2norm(gproj, grid)
    if tau0 is None:
        tau = 0.5 if precondition else 0.1 / kmax
    elif tau0 > 0:
        tau = float(tau0)
    else:
        raise ValueError("tau0 must be positive")
    d_prev = z_prev = g_prev = None
    history = [E]
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"minimisation at a={a:.6g} stalled at residual {res:.3e} after {max_iter} steps"
            )
        it += 1
        if precondition:
            shift = max(abs(mu), 1.0)
            S = 1.0 / np.sqrt(1.0 + V / shift)
            z = S * apply_multiplier(S * gproj, shift / (prob.ksym + shift))
            z -= inner(z, u, grid) * u
        else:
            z = gproj
        if d_prev is None:
            d = -z
        else:
            beta = max(0.0, inner(z, gproj - g_prev, grid) / inner(z_prev, g_prev, grid))
            d = -z + beta * d_prev
            d -= inner(d, u, grid) * u
        slope = 2.0 * inner(G, d, grid)
        if slope >= 0:
            d = -z
            slope = 2.0 * inner(G, d, grid)

        # backtracking with a quadratic guess for the step
        accepted = False
        t = tau
        for _ in range(60):
            un = _normalize(u + t * d, grid)
            En, Gn, _ = prob.evaluate(un)
            if En <= E + 1e-4 * t * slope:
                curv = En - E - t * slope
                if curv > 0:
                    tq = -slope * t * t / (2 * curv)
                    if 1.5 * t < tq < 4 * t:
                        uq = _normalize(u + tq * d, grid)
                        Eq, Gq, _ = prob.evaluate(uq)
                        if Eq < En:
                            t, un, En, Gn = tq, uq, Eq, Gq
                accepted = True
                break
            curv = En - E - t * slope
            tq = -slope * t * t / (2 * curv) if curv > 0 else 0.5 * t
            t = min(max(tq, 0.1 * t), 0.5 * t)
        if not accepted:
            if d_prev is not None:
                d_prev = None
                continue
            raise ConvergenceError(
                f"line search failed at a={a:.6g} (residual {res:.3e}, step {it})"
            )
        tau = 2.0 * t
        g_prev, z_prev, d_prev = gproj, z, d
        u, E, G = un, En, Gn
        mu = inner(G, u, grid)
        gproj = G - mu * u
        res = l2norm(gproj, grid)
        history.append(E)

    u = _normalize(u, grid)
    breakdown = total_energy(u, grid, a, m, V=V)
    mu = inner(prob.evaluate(u)[1], u, grid)
    tail = spectral_tail(u, grid)
    if tail > TAIL_WARN:
        warnings.warn(
            f"minimiser at a={a:.6g} carries {tail:.2e} of its mass in the outer third of the "
            "spectrum; it is not resolved by the grid", UnresolvedStateWarning, stacklevel=2,
        )
    logger.info("a=%.6g: e=%.10g mu=%.6g in %d steps (res %.2e)", a, breakdown.total, mu, it, res)
    return MinimizerResult(
        u=Field(grid, u), breakdown=breakdown, mu_a=mu, iterations=it,
        residual=res, energy_history=tuple(history), spectral_tail=tail,
    )


def _rescaled_start(prev: MinimizerResult, factor: float, center, grid: Grid):
    """``factor^(3/2) u(factor (x - c) + c)``: the previous state squeezed by ``factor``."""
    c = np.asarray(center, dtype=float)
    ax = [factor * (grid.axis - c[k]) + c[k] for k in range(3)]
    u = trig_interpolate(prev.u.values, grid, *ax) * factor**1.5
    u = np.maximum(u, 0.0)
    return _normalize(u, grid)


def sweep(a_values, m: float, spec: PotentialSpec, grid: Grid, astar: float | None = None,
          tol: float = 1e-6, max_iter: int = 3000, init=None, warm_start: bool = True,
          rescale_start: bool = True, callback=None) -> list[MinimizerResult]:
    """Minimise along ascending couplings, warm-starting each solve from the last.

    With ``astar`` known, the previous minimiser is first squeezed by the ratio
    of the predicted widths ``(a* - a)^(1/(p+1))``.  ``callback(result)`` runs
    after every entry (used for checkpointing).
    """
    a_values = [float(a) for a in a_values]
    if not a_values:
        return []
    if any(b <= a for a, b in zip(a_values, a_values[1:])):
        raise ValueError("a_values must be strictly ascending")
    if astar is not None and a_values[-1] >= GUARD_BAND * astar:
        raise ThresholdError(
            f"largest a={a_values[-1]:.6g} is not below {GUARD_BAND} a* = {GUARD_BAND * astar:.6g}"
        )
    results = []
    prev = init
    for a in a_values:
        start = None
        if warm_start and prev is not None:
            start = prev
            if rescale_start and astar is not None and isinstance(prev, MinimizerResult):
                expo = 1.0 / (spec.p + 1.0)
                factor = ((astar - prev.a) / (astar - a)) ** expo
                start = _rescaled_start(prev, factor, spec.Z[0], grid)
        try:
            res = minimize(a, m, spec, grid, init=start, tol=tol, max_iter=max_iter, astar=astar)
        except (ConvergenceError, ValueError) as exc:
            raise SweepError(a, exc) from exc
        results.append(res)
        if callback is not None:
            callback(res)
        prev = res
    return results


def smooth_cutoff(r, delta: float) -> np.ndarray:
    """``C^inf`` radial bump: 1 for ``r <= delta``, 0 for ``r >= 2 delta``."""
    if delta <= 0:
        raise ValueError("cutoff radius delta must be positive")
    t = np.clip((np.asarray(r, dtype=float) - delta) / delta, 0.0, 1.0)

    def f(s):
        with np.errstate(divide="ignore"):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a, b = f(1.0 - t), f(t)
    return a / (a + b)


@dataclass(frozen=True)
class TrialState:
    """A unit-mass member of the concentrating family built from ``Q``.

    ``field`` lives on its own grid; the physical position of a node is its
    grid coordinate plus ``offset``.  On the default native grid (the ground
    state grid shrunk by ``R`` and centred on ``x0``) the dilation is exact.
    """

    field: Field
    R: float
    x0: tuple[float, float, float]
    A_R: float
    delta: float
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def grid(self) -> Grid:
        return self.field.grid


def trial_state(R: float, x0, delta: float, q: QState, grid: Grid | None = None) -> TrialState:
    """``U_R = A_R R^(3/2)/||Q|| phi(x - x0) Q(R(x - x0))`` with unit mass.

    Without ``grid`` the state is sampled on the native grid ``Grid(n_Q, L_Q/R)``
    centred at ``x0``, where its nodes coincide with those of ``Q``.  With
    ``grid`` it is interpolated onto that grid, which is only meaningful when
    the width ``1/R`` is resolved.
    """
    if R < 1:
        raise ValueError(f"scale R must be >= 1, got {R}")
    x0 = tuple(float(c) for c in x0)
    qg = q.grid
    if 2 * delta * R > qg.L:
        raise ValueError(
            f"cutoff support 2*delta*R = {2 * delta * R:.4g} exceeds the ground-state box L = {qg.L}"
        )
    qnorm2 = q.astar
    if grid is None:
        g = Grid(qg.n, qg.L / R)
        phi = smooth_cutoff(g.radius, delta)
        prof = phi * q.q.values
        offset = x0
    else:
        g = grid
        if any(abs(c) + 2 * delta > g.L for c in x0):
            raise ValueError(f"cutoff ball of radius {2 * delta} around {x0} leaves the box")
        ax = [R * (g.axis - c) for c in x0]
        X, Y, Z = g.coords()
        r = np.sqrt((X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + (Z - x0[2]) ** 2)
        prof = smooth_cutoff(r, delta) * trig_interpolate(q.q.values, qg, *ax)
        offset = (0.0, 0.0, 0.0)
    u = R**1.5 / np.sqrt(qnorm2) * prof
    A = 1.0 / l2norm(u, g)
    return TrialState(Field(g, A * u), float(R), x0, float(A), float(delta), offset)


def _shifted_potential(spec: PotentialSpec, grid: Grid, offset) -> np.ndarray:
    X, Y, Z = grid.coords()
    V = spec(X + offset[0], Y + offset[1], Z + offset[2])
    return np.ascontiguousarray(np.broadcast_to(V, grid.shape), dtype=np.float64)


def trial_energy(a: float, m: float, spec: PotentialSpec, trial: TrialState) -> EnergyBreakdown:
    """Energy of a trial state, the trap evaluated at physical positions."""
    V = _shifted_potential(spec, trial.grid, trial.offset)
    return total_energy(trial.field, trial.grid, a, m, V=V)


@dataclass(frozen=True)
class DescentReport:
    """Energies of ``U_R`` over ``R`` and the fitted coefficient of ``R``."""

    a: float
    astar: float
    rows: tuple[dict, ...]
    coefficient: float
    expected: float

    def as_dict(self):
        return {"a": self.a, "astar": self.astar, "coefficient": self.coefficient,
                "expected": self.expected, "rows": list(self.rows)}


def nonexistence_probe(a: float, m: float, spec: PotentialSpec, R_values, q: QState,
                       x0=None, delta: float | None = None) -> DescentReport:
    """Evaluate ``E_a(U_R)`` and fit its growth rate in ``R``.

    The fit basis is ``{R, 1, R^-p}`` (plus ``R^-1`` when ``m != 0``), so the
    trap and mass corrections do not leak into the linear coefficient.  The
    expected coefficient is ``(1 - a/a*) H(Q)/(2 a*)``.
    """
    astar_ = q.astar
    if a < 0.999 * astar_:
        raise ValueError(f"a={a:.6g} is below 0.999 a* = {0.999 * astar_:.6g}; use minimize instead")
    R_values = np.asarray(sorted(float(r) for r in R_values))
    if x0 is None:
        x0 = spec.Z[0]
    if delta is None:
        delta = q.grid.L / (2 * R_values[-1])
    rows = []
    for R in R_values:
        t = trial_state(R, x0, delta, q)
        b = trial_energy(a, m, spec, t)
        rows.append({"R": float(R), "kinetic": b.kinetic, "potential": b.potential,
                     "hartree": b.hartree, "total": b.total, "A_R2": t.A_R**2})
    E = np.array([r["total"] for r in rows])
    cols = [R_values, np.ones_like(R_values), R_values ** (-spec.p)]
    if m != 0:
        cols.append(1.0 / R_values)
    B = np.column_stack(cols[: max(2, min(len(cols), len(R_values) - 1))])
    coef = float(np.linalg.lstsq(B, E, rcond=None)[0][0])
    expected = (1.0 - a / astar_) * q.hartree / (2.0 * astar_)
    return DescentReport(float(a), astar_, tuple(rows), coef, expected)


def abs_comparison(u, a: float, m: float, spec: PotentialSpec, grid: Grid | None = None):
    """``(E_a(u), E_a(|u|))`` for a unit-mass field."""
    if isinstance(u, Field):
        grid = u.grid
        u = u.values
    elif grid is None:
        raise ValueError("grid is required for a bare array")
    e_u = total_energy(u, grid, a, m, spec).total
    e_abs = total_energy(np.abs(u), grid, a, m, spec).total
    return e_u, e_abs


class HartreeMinimizer(BaseEstimator):
    """Estimator wrapper: ``fit(a_values)`` runs a warm-started sweep.

    ``transform(a_values)`` returns the stacked minimisers and
    ``predict(a_values)`` the energies ``e(a)``, both for couplings seen in fit.
    """

    def __init__(self, n=64, L=3.0, m=0.0, p=2.0, center=(0.0, 0.0, 0.0), astar=None,
                 tol=1e-6, max_iter=3000):
        self.n = n
        self.L = L
        self.m = m
        self.p = p
        self.center = center
        self.astar = astar
        self.tol = tol
        self.max_iter = max_iter

    def _lookup(self, a_values):
        check_is_fitted(self, "results_")
        out = []
        for a in np.ravel(np.asarray(a_values, dtype=float)):
            hit = [r for r in self.results_ if abs(r.a - a) <= 1e-12 * max(1.0, abs(a))]
            if not hit:
                raise ValueError(f"a={a} was not part of the fitted sweep")
            out.append(hit[0])
        return out

    def fit(self, X, y=None):
        a_values = np.ravel(np.asarray(X, dtype=float))
        self.grid_ = Grid(self.n, self.L)
        self.spec_ = PotentialSpec.single(self.p, self.center)
        self.results_ = sweep(a_values, self.m, self.spec_, self.grid_, astar=self.astar,
                              tol=self.tol, max_iter=self.max_iter)
        return self

    def transform(self, X):
        return np.stack([r.u.values for r in self._lookup(X)])

    def predict(self, X):
        return np.array([r.e_a for r in self._lookup(X)])
