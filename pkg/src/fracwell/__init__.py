"""fracwell: a lattice laboratory for a random nonlocal double-well energy.

The package discretizes an energy with three pieces on boxes of the unit
lattice: a fractional-kernel interaction (pairwise, translation invariant), a
double-well potential with exactly quadratic wings, and a linear coupling to
bounded i.i.d. site disorder. A nonlocal boundary condition enters through
the interaction of the box with prescribed exterior data. On top of that it
ships a descent solver for approximate maximal/minimal states and a set of
reproducible disorder-averaged experiments (boundary scaling, conditional
energy-difference statistics, envelope derivatives, ergodic means, uniqueness
gaps).
"""

__version__ = "0.1.0"

from .lattice import (DistSpec, Disorder, Grid, lift_g1, make_grid,
                      negate_disorder, sample_disorder, translate_disorder)
from .potential import PotentialSpec, build_potential
from .energy import (ConstantExterior, EnergyBreakdown, KernelTable,
                     ScalarField, WindowExterior, el_residual,
                     exterior_interaction, exterior_weights, gradient,
                     interior_energy, region_energy, total_energy,
                     weight_mass)
from .minimize import (ExtremalStates, MinimizeResult, Problem, SolverConfig,
                       extremal_pair, glue_cutoff, lattice_min_max, minimize,
                       truncate)

__all__ = [
    "__version__",
    "DistSpec", "Disorder", "Grid", "lift_g1", "make_grid",
    "negate_disorder", "sample_disorder", "translate_disorder",
    "PotentialSpec", "build_potential",
    "ConstantExterior", "EnergyBreakdown", "KernelTable", "ScalarField",
    "WindowExterior", "el_residual", "exterior_interaction",
    "exterior_weights", "gradient", "interior_energy", "region_energy",
    "total_energy", "weight_mass",
    "ExtremalStates", "MinimizeResult", "Problem", "SolverConfig",
    "extremal_pair", "glue_cutoff", "lattice_min_max", "minimize", "truncate",
]
