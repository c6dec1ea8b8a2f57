"""2D finite-volume split-drain device simulator with circuit coupling,
gate-voltage state maps and a behavioral multi-valued-logic layer."""

__version__ = "0.1.0"

from .device import (MaterialParams, Region, Contact, DeviceSpec,
                     TwoDrainGeometry, ThreeDrainGeometry,
                     build_two_drain_spec, build_three_drain_spec,
                     validate_spec)
from .mesh import Mesh, MeshResolution, MeshError, generate_mesh
from .physics import (FieldState, LinearSystem, bernoulli,
                      ohmic_contact_values, equilibrium_init,
                      assemble_poisson, assemble_continuity,
                      compute_terminal_current, BiasError)
from .solver import (SolverOptions, ConvergenceTrace, solve_linear,
                     newton_poisson, gummel_solve, continuation_solve,
                     LinearSolveError, NonConvergenceError)

__all__ = [
    "MaterialParams", "Region", "Contact", "DeviceSpec",
    "TwoDrainGeometry", "ThreeDrainGeometry",
    "build_two_drain_spec", "build_three_drain_spec", "validate_spec",
    "Mesh", "MeshResolution", "MeshError", "generate_mesh",
    "FieldState", "LinearSystem", "bernoulli", "ohmic_contact_values",
    "equilibrium_init", "assemble_poisson", "assemble_continuity",
    "compute_terminal_current", "BiasError",
    "SolverOptions", "ConvergenceTrace", "solve_linear", "newton_poisson",
    "gummel_solve", "continuation_solve", "LinearSolveError",
    "NonConvergenceError",
]
