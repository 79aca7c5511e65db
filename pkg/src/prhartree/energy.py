"""Trap potential, Hartree term, total energy and the Weinstein quotient."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, check_field, integrate, mass
from .operators import hartree_potential, kinetic_form, riesz_form

__all__ = [
    "MassConstraintError",
    "PotentialSpec",
    "EnergyBreakdown",
    "potential_eval",
    "hartree_term",
    "total_energy",
    "weinstein",
]

MASS_TOL = 1e-10


class MassConstraintError(ValueError):
    """A constrained evaluation received a state whose mass is not 1."""


@dataclass(frozen=True)
class PotentialSpec:
    """Trap ``V(x) = prod_i |x - x_i|^{p_i}``."""

    points: tuple
    exponents: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in x) for x in self.points)
        exps = tuple(float(p) for p in self.exponents)
        if not pts:
            raise ValueError("at least one trap point is required")
        if len(pts) != len(exps):
            raise ValueError("points and exponents must have the same length")
        if any(len(x) != 3 for x in pts):
            raise ValueError("trap points must be 3-vectors")
        if any(not p > 0 for p in exps):
            raise ValueError("all exponents must be positive")
        if len(set(pts)) != len(pts):
            raise ValueError("trap points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def single(cls, p=2.0, center=(0.0, 0.0, 0.0)):
        return cls((tuple(center),), (p,))

    @property
    def p(self) -> float:
        return max(self.exponents)

    @property
    def kappas(self) -> tuple[float, ...]:
        """Local flatness ``lim V(x)/|x-x_i|^p`` at each trap point."""
        out = []
        pts = np.asarray(self.points)
        for i, (xi, pi) in enumerate(zip(pts, self.exponents)):
            if pi < self.p:
                out.append(math.inf)
                continue
            k = 1.0
            for j, (xj, pj) in enumerate(zip(pts, self.exponents)):
                if j != i:
                    k *= float(np.linalg.norm(xi - xj)) ** pj
            out.append(k)
        return tuple(out)

    @property
    def kappa(self) -> float:
        return min(self.kappas)

    @property
    def Z(self) -> tuple[tuple[float, float, float], ...]:
        k = self.kappa
        return tuple(x for x, ki in zip(self.points, self.kappas) if ki == k)

    def __call__(self, X, Y, Z):
        V = 1.0
        for (a, b, c), p in zip(self.points, self.exponents):
            V = V * ((X - a) ** 2 + (Y - b) ** 2 + (Z - c) ** 2) ** (p / 2)
        return V

    def check_inside(self, grid: Grid):
        margin = grid.L / 4
        for x in self.points:
            for c in x:
                if not (-grid.L + margin <= c <= grid.L - margin):
                    raise ValueError(
                        f"trap point {x} is not inside the box with margin L/4 = {margin}"
                    )

    def to_dict(self):
        return {"points": [list(x) for x in self.points], "exponents": list(self.exponents)}


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    hartree: float
    a: float
    m: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential - 0.5 * self.a * self.hartree

    def as_dict(self):
        return {
            "kinetic": self.kinetic, "potential": self.potential, "hartree": self.hartree,
            "total": self.total, "a": self.a, "m": self.m,
        }


def potential_eval(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    """Sample the trap on the grid nodes."""
    spec.check_inside(grid)
    V = np.broadcast_to(spec(*grid.coords()), grid.shape)
    return np.ascontiguousarray(V, dtype=np.float64)


def hartree_term(u, grid: Grid) -> float:
    """``int (|x|^-1 * u^2) u^2``."""
    u = check_field(u, grid)
    return integrate(hartree_potential(u, grid) * (u * u), grid)


def total_energy(u, grid: Grid, a: float, m: float, spec: PotentialSpec | None = None,
                 constrained: bool = True, V=None) -> EnergyBreakdown:
    """Energy of ``u`` split into kinetic, trap and Hartree parts.

    Either ``spec`` or a pre-sampled potential ``V`` must be given.
    """
    u = check_field(u, grid)
    if constrained:
        mu = mass(u, grid)
        if abs(mu - 1.0) > MASS_TOL:
            raise MassConstraintError(f"mass(u) = {mu!r} differs from 1 by more than {MASS_TOL}")
    if V is None:
        if spec is None:
            raise ValueError("either spec or V is required")
        V = potential_eval(spec, grid)
    return EnergyBreakdown(
        kinetic=kinetic_form(u, grid, m),
        potential=integrate(V * u * u, grid),
        hartree=hartree_term(u, grid),
        a=float(a), m=float(m),
    )


def weinstein(u, grid: Grid) -> float:
    """``<u, sqrt(-Lap) u> ||u||^2 / int (|x|^-1 * u^2) u^2``."""
    u = check_field(u, grid)
    H = hartree_term(u, grid)
    if H <= 0:
        raise ZeroDivisionError("Weinstein quotient undefined for u == 0")
    return riesz_form(u, grid, 0.5) * mass(u, grid) / H
