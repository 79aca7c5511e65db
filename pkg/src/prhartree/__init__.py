"""Pseudo-relativistic Hartree energy: ground state, constrained minimisers, blow-up analysis."""

from .concentration import (
    PowerLawFit,
    ProfileComparison,
    Rescaler,
    ScalingReport,
    compare_profile,
    concentration_point,
    fit_scaling,
    profile_distance,
    rescale,
    symmetry_gap,
)
from .energy import EnergyBreakdown, PotentialSpec, hartree_term, total_energy, weinstein
from .grid import Field, Grid, SpectralField, make_grid
from .ground_state import GroundStateSolver, QState, solve_q
from .minimizer import (
    HartreeMinimizer,
    MinimizerResult,
    TrialState,
    minimize,
    nonexistence_probe,
    sweep,
    trial_energy,
    trial_state,
)
from .operators import (
    coulomb_convolve,
    commutator_apply,
    kinetic_form,
    riesz_form,
)

__version__ = "0.1.0"

__all__ = [
    "PowerLawFit",
    "ProfileComparison",
    "Rescaler",
    "ScalingReport",
    "compare_profile",
    "concentration_point",
    "fit_scaling",
    "profile_distance",
    "rescale",
    "symmetry_gap",
    "EnergyBreakdown",
    "PotentialSpec",
    "hartree_term",
    "total_energy",
    "weinstein",
    "Field",
    "Grid",
    "SpectralField",
    "make_grid",
    "GroundStateSolver",
    "QState",
    "solve_q",
    "HartreeMinimizer",
    "MinimizerResult",
    "TrialState",
    "minimize",
    "nonexistence_probe",
    "sweep",
    "trial_energy",
    "trial_state",
    "coulomb_convolve",
    "commutator_apply",
    "kinetic_form",
    "riesz_form",
]
