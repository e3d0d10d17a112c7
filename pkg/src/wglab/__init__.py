"""Weak Galerkin finite element laboratory for the 2D Poisson problem."""

from .mesh import (
    RECTANGULAR, TRIANGULAR, Mesh, build_mesh, dump_mesh, element_from_vertices,
)
from .polyspace import (
    FULL_POLY, RAVIART_THOMAS, GradientSpace, parse_gradient_space,
)
from .weakop import LocalDofLayout, local_stabilizer, local_stiffness, weak_gradient
from .assembly import (
    ElementConfig, LinearSystem, WeakCoeffVector, assemble, build_dof_map,
    residual_check, solve,
)
from .solutions import SOLUTIONS, ManufacturedSolution, get_solution
from .study import ConvergenceReport, emit_table, rate, run_study, summary_rates
from .manifest import RunManifest, bundled_manifest_path, load_manifest, run_suite

__all__ = [
    "RECTANGULAR", "TRIANGULAR", "Mesh", "build_mesh", "dump_mesh",
    "element_from_vertices", "FULL_POLY", "RAVIART_THOMAS", "GradientSpace",
    "parse_gradient_space", "LocalDofLayout", "weak_gradient", "local_stiffness",
    "local_stabilizer", "ElementConfig", "LinearSystem", "WeakCoeffVector",
    "assemble", "build_dof_map", "solve", "residual_check", "SOLUTIONS",
    "ManufacturedSolution", "get_solution", "ConvergenceReport", "run_study",
    "rate", "emit_table", "summary_rates", "RunManifest", "load_manifest",
    "run_suite", "bundled_manifest_path",
]

__version__ = "0.1.0"
