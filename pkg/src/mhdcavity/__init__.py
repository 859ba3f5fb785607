"""Steady MHD mixed convection with heat and mass transfer in a lid-driven
cavity: geometry, meshing, Taylor-Hood finite elements, Picard iteration and
post-processing."""

from .assembly import (BoundaryConditions, DimensionlessGroups, DirichletRule,
                       cavity_conditions, nondimensionalize, triangular_cavity_conditions)
from .geometry import (BoundaryTag, CavityGeometry, InvalidGeometry, Trapezoid,
                       rectangle_domain, triangular_cavity_geometry)
from .mesh import Mesh, MeshFailure, generate_mesh, grid_sequence, mesh_quality
from .postprocess import (average_nusselt, export_fields, local_nusselt, nusselt_report,
                          stream_function)
from .solver import (FieldSolution, NotConverged, SingularMatrix, SolverOptions,
                     continuation_solve, solve_steady)

__all__ = [
    "BoundaryConditions", "BoundaryTag", "CavityGeometry", "DimensionlessGroups",
    "DirichletRule", "FieldSolution", "InvalidGeometry", "Mesh", "MeshFailure",
    "NotConverged", "SingularMatrix", "SolverOptions", "Trapezoid", "average_nusselt",
    "cavity_conditions", "continuation_solve", "export_fields", "generate_mesh",
    "grid_sequence", "local_nusselt", "mesh_quality", "nondimensionalize", "nusselt_report",
    "rectangle_domain", "solve_steady", "stream_function", "triangular_cavity_conditions",
    "triangular_cavity_geometry",
]
