"""Blow-up analysis of minimisers near the critical coupling.

Minimisers are rescaled about their concentration point by
``lambda_a = (a* - a)^(1/(p+1))`` and compared with ``mu^(3/2) Q(mu x)/||Q||``.
Energies and Hartree terms along a sweep are fitted against ``a* - a`` in
log-log coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .energy import PotentialSpec
from .grid import Field, Grid, integrate, l2norm, mass, trig_interpolate
from .ground_state import QState, mu_predicted, weighted_moment

__all__ = [
    "NotConcentratedError",
    "ScalingReport",
    "ProfileComparison",
    "blowup_scale",
    "rescale",
    "concentration_point",
    "reference_profile",
    "profile_distance",
    "compare_profile",
    "loglog_fit",
    "fit_scaling",
    "symmetry_gap",
    "scale_functional",
    "mu_minimality",
    "PowerLawFit",
    "Rescaler",
]


class NotConcentratedError(ValueError):
    """No trap ball holds the required share of the mass."""


def blowup_scale(a: float, astar: float, p: float) -> float:
    """``(a* - a)^(1/(p+1))``."""
    if not a < astar:
        raise ValueError(f"a={a} must be below a*={astar}")
    return float((astar - a) ** (1.0 / (p + 1.0)))


def rescale(u, a: float, astar: float, p: float, x_j, target_grid: Grid | None = None) -> Field:
    """``w(x) = lambda^(3/2) u(lambda x + x_j)`` by trigonometric interpolation.

    Without ``target_grid`` the target is ``Grid(n, L/lambda)``; if ``x_j`` is
    a node its nodes then map onto source nodes and the resampling is exact.
    """
    if not isinstance(u, Field):
        raise TypeError("rescale expects a Field")
    src = u.grid
    lam = blowup_scale(a, astar, p)
    xj = np.asarray(x_j, dtype=float)
    tg = Grid(src.n, src.L / lam) if target_grid is None else target_grid
    reach = lam * tg.L + np.abs(xj).max()
    if reach > src.L * (1 + 1e-12):
        raise ValueError(
            f"rescaled window reaches {reach:.4g}, beyond the source half-length {src.L}"
        )
    ax = [lam * tg.axis + xj[k] for k in range(3)]
    return Field(tg, lam**1.5 * trig_interpolate(u.values, src, *ax))


def concentration_point(u, spec: PotentialSpec, lambda_a: float, radius_factor: float = 10.0,
                        threshold: float = 0.5):
    """Trap point whose ball of radius ``10 lambda_a`` holds the most mass.

    Returns ``(x_j, fraction)``.
    """
    if not isinstance(u, Field):
        raise TypeError("concentration_point expects a Field")
    grid = u.grid
    X, Y, Z = grid.coords()
    rho = u.values**2
    total = integrate(rho, grid)
    best, frac = None, -1.0
    rad2 = (radius_factor * lambda_a) ** 2
    for x in spec.points:
        inside = (X - x[0]) ** 2 + (Y - x[1]) ** 2 + (Z - x[2]) ** 2 <= rad2
        f = integrate(rho * inside, grid) / total
        if f > frac:
            best, frac = x, f
    if frac < threshold:
        raise NotConcentratedError(
            f"largest captured mass fraction {frac:.3f} is below {threshold}: not yet concentrated"
        )
    return tuple(best), float(frac)


def reference_profile(q: QState, mu: float, grid: Grid, shift=(0.0, 0.0, 0.0)) -> np.ndarray:
    """``mu^(3/2) Q(mu (x - shift)) / ||Q||`` sampled on ``grid``.

    Points outside the box of ``Q`` get the value 0.
    """
    qg = q.grid
    ax = [mu * (grid.axis - s) for s in shift]
    vals = trig_interpolate(q.q.values, qg, *ax)
    inside = [(a >= -qg.L) & (a < qg.L) for a in ax]
    mask = inside[0][:, None, None] & inside[1][None, :, None] & inside[2][None, None, :]
    return np.where(mask, vals, 0.0) * mu**1.5 / np.sqrt(q.astar)


@dataclass(frozen=True)
class ProfileComparison:
    lambda_a: float
    x_j: tuple
    shift: tuple
    l2_distance: float
    mu_used: float
    w_mass: float
    a: float | None = None
    captured_fraction: float | None = None

    def as_dict(self):
        return {
            "a": self.a, "lambda_a": self.lambda_a, "x_j": list(self.x_j),
            "shift": list(self.shift), "l2_distance": self.l2_distance,
            "mu_used": self.mu_used, "w_mass": self.w_mass,
            "captured_fraction": self.captured_fraction,
        }


def profile_distance(w, q: QState, mu: float, lambda_a: float = float("nan"),
                     x_j=(0.0, 0.0, 0.0)) -> ProfileComparison:
    """Distance from ``w`` to the translated limit profile, minimised over the shift.

    The shift starts at the peak of the FFT cross-correlation and is refined
    by a derivative-free local search.
    """
    if not isinstance(w, Field):
        raise TypeError("profile_distance expects a Field")
    g = w.grid
    wv = w.values
    ref0 = reference_profile(q, mu, g)
    corr = np.fft.ifftn(np.fft.fftn(wv) * np.conj(np.fft.fftn(ref0))).real
    peak = np.unravel_index(np.argmax(corr), g.shape)
    start = np.array([((k + g.n // 2) % g.n - g.n // 2) * g.h for k in peak])

    def dist(y):
        return l2norm(wv - reference_profile(q, mu, g, y), g)

    d0 = dist(np.zeros(3))
    res = optimize.minimize(dist, start, method="Nelder-Mead",
                            options={"xatol": 1e-4 * g.h, "fatol": 1e-13, "maxiter": 400})
    y, d = (res.x, float(res.fun)) if res.fun < d0 else (np.zeros(3), d0)
    return ProfileComparison(
        lambda_a=float(lambda_a), x_j=tuple(float(c) for c in x_j),
        shift=tuple(float(c) for c in y), l2_distance=d, mu_used=float(mu),
        w_mass=mass(wv, g),
    )


def compare_profile(result, astar: float, spec: PotentialSpec, q: QState,
                    target_grid: Grid | None = None) -> ProfileComparison:
    """Concentration point, rescaling and profile distance for one minimiser."""
    p = spec.p
    lam = blowup_scale(result.a, astar, p)
    xj, frac = concentration_point(result.u, spec, lam)
    w = rescale(result.u, result.a, astar, p, xj, target_grid)
    mu = mu_predicted(spec.kappa, p, q)
    pc = profile_distance(w, q, mu, lam, xj)
    return ProfileComparison(**{**pc.__dict__, "a": float(result.a), "captured_fraction": frac})


def loglog_fit(x, y):
    """Least-squares line through ``(log x, log y)``.

    Returns ``(slope, intercept, slope_stderr, intercept_stderr, residuals)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    r = stats.linregress(lx, ly)
    resid = ly - (r.intercept + r.slope * lx)
    return float(r.slope), float(r.intercept), float(r.stderr), float(r.intercept_stderr), resid


@dataclass(frozen=True)
class ScalingReport:
    energy_exponent: float
    energy_exponent_stderr: float
    hartree_exponent: float
    hartree_exponent_stderr: float
    energy_prefactor: float
    energy_prefactor_stderr: float
    predicted_prefactor: float
    predicted_energy_exponent: float
    predicted_hartree_exponent: float
    a_values: tuple[float, ...]
    energy_residuals: tuple[float, ...]
    hartree_residuals: tuple[float, ...]
    excluded: tuple[float, ...] = field(default=())

    def as_dict(self):
        return dict(self.__dict__)


def _as_row(r):
    return r.row() if hasattr(r, "row") else dict(r)


def fit_scaling(sweep_table, astar: float, spec: PotentialSpec, q: QState,
                window=(0.8, 0.98), residual_tol: float | None = None,
                min_points: int = 5) -> ScalingReport:
    """Fit ``e(a)`` and the Hartree term against ``a* - a`` over ``window * a*``.

    The prefactor is fitted with the exponent held at ``p/(p+1)``, i.e. it is
    the geometric mean of ``e(a) / (a* - a)^(p/(p+1))``.  Rows whose solver
    residual exceeds ``residual_tol`` are dropped and listed in ``excluded``.
    """
    p = spec.p
    rows = [_as_row(r) for r in sweep_table]
    lo, hi = window
    sel, excluded = [], []
    for r in rows:
        f = r["a"] / astar
        if not lo - 1e-9 <= f <= hi + 1e-9:
            continue
        if residual_tol is not None and r["residual"] > residual_tol:
            excluded.append(r["a"])
            continue
        sel.append(r)
    if len(sel) < min_points:
        raise ValueError(f"scaling fit needs at least {min_points} points in the window, got {len(sel)}")
    a = np.array([r["a"] for r in sel])
    gap = astar - a
    e = np.array([r["e_a"] for r in sel])
    har = np.array([r["hartree"] for r in sel])
    se, _, se_err, _, e_res = loglog_fit(gap, e)
    sh, _, sh_err, _, h_res = loglog_fit(gap, har)
    expo = p / (p + 1.0)
    logc = np.log(e) - expo * np.log(gap)
    C = float(np.exp(logc.mean()))
    C_err = float(C * logc.std(ddof=1) / np.sqrt(len(logc))) if len(logc) > 1 else float("nan")
    mu = mu_predicted(spec.kappa, p, q)
    return ScalingReport(
        energy_exponent=se, energy_exponent_stderr=se_err,
        hartree_exponent=sh, hartree_exponent_stderr=sh_err,
        energy_prefactor=C, energy_prefactor_stderr=C_err,
        predicted_prefactor=(p + 1.0) / p * mu / astar,
        predicted_energy_exponent=expo, predicted_hartree_exponent=-1.0 / (p + 1.0),
        a_values=tuple(a.tolist()), energy_residuals=tuple(e_res.tolist()),
        hartree_residuals=tuple(h_res.tolist()), excluded=tuple(excluded),
    )


def symmetry_gap(q: QState, y0, p: float, beta2: float = 1.0) -> float:
    """``int |x + beta2 y0|^p Q^2 - int |x|^p Q^2``."""
    g = q.grid
    off = beta2 * np.asarray(y0, dtype=float)
    if np.abs(off).max() > g.L / 4:
        raise ValueError(f"offset {tuple(off)} leaves the box margin L/4 = {g.L / 4}")
    X, Y, Z = g.coords()
    r = np.sqrt((X + off[0]) ** 2 + (Y + off[1]) ** 2 + (Z + off[2]) ** 2)
    rho = q.q.values ** 2
    return integrate(r**p * rho, g) - weighted_moment(q, p)


def scale_functional(beta2, kappa: float, p: float, moment: float):
    """``beta2 + kappa beta2^(-p) int |x|^p Q^2``, minimised at ``beta2 = mu``."""
    beta2 = np.asarray(beta2, dtype=float)
    return beta2 + kappa * beta2 ** (-p) * moment


def mu_minimality(q: QState, kappa: float, p: float, npts: int = 2001, span: float = 4.0):
    """Grid minimiser of :func:`scale_functional` next to the predicted ``mu``.

    Returns ``(beta2_at_min, mu, step)``.
    """
    mu = mu_predicted(kappa, p, q)
    b = np.linspace(mu / span, mu * span, npts)
    vals = scale_functional(b, kappa, p, weighted_moment(q, p))
    return float(b[np.argmin(vals)]), mu, float(b[1] - b[0])


class PowerLawFit(RegressorMixin, BaseEstimator):
    """``y = C (astar - a)^s`` fitted in log-log coordinates.

    ``fit(a_values, y)`` sets ``exponent_``, ``prefactor_`` and
    ``exponent_stderr_``; ``predict`` evaluates the fitted law.
    """

    def __init__(self, astar=1.0):
        self.astar = astar

    def fit(self, X, y):
        a = np.ravel(np.asarray(X, dtype=float))
        y = np.ravel(np.asarray(y, dtype=float))
        if a.shape != y.shape:
            raise ValueError("X and y must have the same length")
        s, c, s_err, _, _ = loglog_fit(self.astar - a, y)
        self.exponent_, self.prefactor_, self.exponent_stderr_ = s, float(np.exp(c)), s_err
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        a = np.ravel(np.asarray(X, dtype=float))
        return self.prefactor_ * (self.astar - a) ** self.exponent_

    def score(self, X, y):
        """R^2 in log coordinates."""
        ly = np.log(np.ravel(y))
        lp = np.log(self.predict(X))
        return float(1.0 - np.sum((ly - lp) ** 2) / np.sum((ly - ly.mean()) ** 2))


class Rescaler(TransformerMixin, BaseEstimator):
    """Maps minimisers to their blow-up profiles ``w``.

    ``transform`` takes a list of :class:`~prhartree.minimizer.MinimizerResult`
    and returns the rescaled fields stacked along the first axis.  With
    ``target_n``/``target_L`` unset each field keeps its own natural grid,
    so all inputs must then share one source grid.
    """

    def __init__(self, astar=1.0, p=2.0, center=(0.0, 0.0, 0.0), target_n=None, target_L=None):
        self.astar = astar
        self.p = p
        self.center = center
        self.target_n = target_n
        self.target_L = target_L

    def fit(self, X=None, y=None):
        self.target_grid_ = (Grid(self.target_n, self.target_L)
                             if self.target_n is not None else None)
        return self

    def transform(self, X):
        check_is_fitted(self, "target_grid_")
        return np.stack([
            rescale(r.u, r.a, self.astar, self.p, self.center, self.target_grid_).values
            for r in X
        ])
