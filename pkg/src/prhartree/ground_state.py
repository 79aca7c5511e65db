"""Positive radial ground state ``Q`` of ``sqrt(-Lap) Q + Q = (|x|^-1 * Q^2) Q``.

``a* = ||Q||_2^2`` is the critical coupling of the constrained problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .energy import hartree_term
from .grid import Field, Grid, check_field, integrate, l2norm, mass
from .operators import apply_multiplier, hartree_potential, riesz_form

logger = logging.getLogger(__name__)

__all__ = [
    "ConvergenceError",
    "QState",
    "solve_q",
    "symmetrize",
    "astar",
    "decay_report",
    "shell_average",
    "weighted_moment",
    "mu_predicted",
    "GroundStateSolver",
]


class ConvergenceError(RuntimeError):
    """An iteration stopped before reaching its tolerance."""


@dataclass(frozen=True)
class QState:
    """A computed ground state together with its certification diagnostics."""

    q: Field
    astar: float
    kinetic_half: float
    hartree: float
    pohozaev_ratios: tuple[float, float]
    decay_slope: float
    residual: float
    iterations: int = 0
    residual_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def grid(self) -> Grid:
        return self.q.grid

    def certify(self, pohozaev_tol=1e-3, slope_range=(-4.5, -3.5), residual_tol=None):
        """Return the list of failed checks (empty when certified)."""
        failures = []
        for name, ratio in zip(("2K/H", "H/2M"), self.pohozaev_ratios):
            if abs(ratio - 1.0) > pohozaev_tol:
                failures.append(f"Pohozaev ratio {name}={ratio:.6f} off by more than {pohozaev_tol}")
        lo, hi = slope_range
        if not lo <= self.decay_slope <= hi:
            failures.append(f"tail slope {self.decay_slope:.3f} outside [{lo}, {hi}]")
        if residual_tol is not None and self.residual > residual_tol:
            failures.append(f"residual {self.residual:.2e} above {residual_tol:.2e}")
        if np.min(self.q.values) <= 0:
            failures.append("Q is not strictly positive")
        return failures


def _residual(u, grid, lin_symbol):
    Lu = apply_multiplier(u, lin_symbol)
    N = hartree_potential(u, grid) * u
    return Lu, N, l2norm(Lu - N, grid)


def symmetrize(u: np.ndarray) -> np.ndarray:
    """Average over the 48 symmetries of the cube about the origin node.

    Reflection on the periodic lattice maps index ``i`` to ``-i mod n``.
    """
    for ax in range(3):
        u = 0.5 * (u + np.roll(np.flip(u, axis=ax), 1, axis=ax))
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    return sum(np.transpose(u, p) for p in perms) / 6.0


def solve_q(grid: Grid, tol: float = 1e-7, max_iter: int = 1000, init=None,
            symmetric: bool = True) -> QState:
    """Petviashvili iteration for the ground state, started from ``exp(-|x|^2/4)``.

    Each step maps ``u`` to ``M^(3/2) (sqrt(-Lap)+1)^-1 [(|x|^-1*u^2) u]`` with
    ``M = <(sqrt(-Lap)+1) u, u> / <(|x|^-1*u^2) u, u>``.  With ``symmetric``
    the iterate is projected onto cube-symmetric fields, which removes the
    neutral translation modes that the padded convolution would otherwise feed.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = np.exp(-grid.radius**2 / 4) if init is None else check_field(init, grid).copy()
    lin = np.sqrt(grid.xi2) + 1.0
    inv = 1.0 / lin
    history = []
    for it in range(max_iter + 1):
        Lu, N, res = _residual(u, grid, lin)
        history.append(res)
        if res <= tol:
            break
        if it == max_iter:
            raise ConvergenceError(
                f"ground-state iteration stalled at residual {res:.3e} after {max_iter} steps"
            )
        den = integrate(N * u, grid)
        if not den > 0 or mass(u, grid) < 1e-8:
            raise ConvergenceError("ground-state iteration collapsed to zero")
        M = integrate(Lu * u, grid) / den
        u = M**1.5 * apply_multiplier(N, inv)
        if symmetric:
            u = symmetrize(u)
    logger.info("ground state converged in %d steps, residual %.2e", it, res)
    return _make_qstate(u, grid, res, it, history)


def _make_qstate(u, grid, res, it, history) -> QState:
    qf = Field(grid, u)
    m = mass(u, grid)
    K = riesz_form(u, grid, 0.5)
    H = hartree_term(u, grid)
    lo, hi = 0.3 * grid.L, 0.7 * grid.L
    try:
        slope = _decay_slope(u, grid, (lo, hi))
    except ValueError:
        slope = float("nan")
    return QState(
        q=qf, astar=m, kinetic_half=K, hartree=H,
        pohozaev_ratios=(2 * K / H, H / (2 * m)), decay_slope=slope,
        residual=float(res), iterations=it, residual_history=tuple(history),
    )


def astar(q: QState) -> float:
    """Critical coupling ``||Q||_2^2``."""
    return mass(q.q.values, q.grid)


def shell_average(u, grid: Grid, nbins: int | None = None):
    """Average ``u`` over spherical shells of width ``h`` about the origin."""
    u = check_field(u, grid)
    r = grid.radius.ravel()
    edges = grid.h * (np.arange((nbins or grid.n // 2) + 1) + 0.5)
    which = np.digitize(r, edges)
    counts = np.bincount(which, minlength=len(edges) + 1)
    sums = np.bincount(which, weights=u.ravel(), minlength=len(edges) + 1)
    rsum = np.bincount(which, weights=r, minlength=len(edges) + 1)
    keep = counts[1:len(edges)] > 0
    radii = (rsum[1:len(edges)] / np.maximum(counts[1:len(edges)], 1))[keep]
    vals = (sums[1:len(edges)] / np.maximum(counts[1:len(edges)], 1))[keep]
    return radii, vals


def _decay_slope(u, grid, window):
    lo, hi = window
    if lo < 0.3 * grid.L - 1e-12 or hi > 0.7 * grid.L + 1e-12 or lo >= hi:
        raise ValueError(
            f"window {window} must lie inside [0.3L, 0.7L] = [{0.3 * grid.L}, {0.7 * grid.L}]"
        )
    r, v = shell_average(u, grid)
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 3 or np.any(v[sel] <= 0):
        raise ValueError("not enough positive shell averages in the decay window")
    slope, _ = np.polyfit(np.log(r[sel]), np.log(v[sel]), 1)
    return float(slope)


def decay_report(q, window=None) -> float:
    """Least-squares slope of ``log Q`` against ``log |x|`` on shell averages.

    ``q`` may be a :class:`QState` or a :class:`Field`.  The default window is
    ``[0.3L, 0.7L]``.
    """
    f = q.q if isinstance(q, QState) else q
    grid = f.grid
    if window is None:
        window = (0.3 * grid.L, 0.7 * grid.L)
    return _decay_slope(f.values, grid, window)


def weighted_moment(q: QState, p: float) -> float:
    """``int |x|^p Q^2``; supported for ``0 <= p <= 5/2``."""
    if not 0 <= p <= 2.5:
        raise ValueError(f"moment exponent p={p} outside the supported range [0, 5/2]")
    grid = q.grid
    u = q.q.values
    return integrate(grid.radius**p * u * u, grid)


def mu_predicted(kappa: float, p: float, q: QState) -> float:
    """Blow-up scale ``(p kappa int |x|^p Q^2)^(1/(p+1))``."""
    if not np.isfinite(kappa) or kappa <= 0:
        raise ValueError(f"kappa must be positive and finite, got {kappa}")
    if p <= 0:
        raise ValueError("p must be positive")
    return float((p * kappa * weighted_moment(q, p)) ** (1.0 / (p + 1.0)))


class GroundStateSolver(BaseEstimator):
    """Estimator wrapper around :func:`solve_q`.

    Parameters
    ----------
    n, L : grid points per axis and box half-length.
    tol : residual tolerance of the Petviashvili iteration.
    max_iter : iteration cap.

    After :meth:`fit`, ``qstate_``, ``astar_`` and ``q_`` are available.
    """

    def __init__(self, n=96, L=24.0, tol=1e-7, max_iter=1000):
        self.n = n
        self.L = L
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        grid = Grid(self.n, self.L)
        self.qstate_ = solve_q(grid, tol=self.tol, max_iter=self.max_iter, init=X)
        self.astar_ = self.qstate_.astar
        self.q_ = self.qstate_.q.values
        return self

    def certify(self, **kwargs):
        check_is_fitted(self, "qstate_")
        return self.qstate_.certify(**kwargs)
