"""Conservative multiscale solver for the 1D Gross-Pitaevskii equation.

A coarse P1 space on an interval is enriched by localized, a-orthogonal
correctors computed on a dyadically refined fine mesh.  A Crank-Nicolson
stepper with a projected cubic term conserves mass and a modified energy
exactly in that space; a classical fine-grid stepper and a two-soliton
benchmark with closed-form solution provide references.  The
``experiments`` module and the ``gpelod`` command reproduce the study's
convergence, locality, drift and cost measurements at desk scale.
"""

from .benchmark import (BenchmarkProblem, drift_velocities, exact_solution,
                        exact_solution_dx, initial_value, single_soliton)
from .dynamics import (ClassicalCnStepper, FixedPointDivergedError,
                       ModifiedCnStepper, SolverOptions, StepperState,
                       Trajectory, evolve)
from .invariants import (InvariantRecord, center_of_mass, energy,
                         invariants_of_function, mass, modified_energy,
                         momentum, record)
from .lod import (LodSpace, SingularPatchError, build_lod_space,
                  default_layers, ritz_project, solve_corrector)
from .mesh import (FineSpace, GridHierarchy, PotentialSplit, ZERO_POTENTIAL,
                   assemble_p1_matrix)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkProblem", "ClassicalCnStepper", "FineSpace",
    "FixedPointDivergedError", "GridHierarchy", "InvariantRecord",
    "LodSpace", "ModifiedCnStepper", "PotentialSplit", "SingularPatchError",
    "SolverOptions", "StepperState", "Trajectory", "ZERO_POTENTIAL",
    "assemble_p1_matrix", "build_lod_space", "center_of_mass",
    "default_layers", "drift_velocities", "energy", "evolve",
    "exact_solution", "exact_solution_dx", "initial_value",
    "invariants_of_function", "mass", "modified_energy", "momentum",
    "record", "ritz_project", "single_soliton", "solve_corrector",
]
