"""Shape derivatives of finite-element functionals by differentiating the reference-cell pull-back."""

from shapediff.assemble import DirichletBC, apply_bc_to_function, assemble, interpolate_expression
from shapediff.geometry import (
    Function,
    FunctionSpace,
    Mesh,
    VectorFunctionSpace,
    annulus_sector_mesh,
    cell_map_jacobian,
    move_mesh,
    rectangle_mesh,
    unit_square_mesh,
    validate_mesh,
)
from shapediff.pullback import coordinate_derivative, derivative, pull_back, shape_derivative
from shapediff.quadrature import quadrature
from shapediff.solve import LinearSystem, adjoint_solve, lagrangian, newton_solve, solve_linear
from shapediff import symlang

__version__ = "0.1.0"

__all__ = [
    "DirichletBC",
    "Function",
    "FunctionSpace",
    "LinearSystem",
    "Mesh",
    "VectorFunctionSpace",
    "adjoint_solve",
    "annulus_sector_mesh",
    "apply_bc_to_function",
    "assemble",
    "cell_map_jacobian",
    "coordinate_derivative",
    "derivative",
    "interpolate_expression",
    "lagrangian",
    "move_mesh",
    "newton_solve",
    "pull_back",
    "quadrature",
    "rectangle_mesh",
    "shape_derivative",
    "solve_linear",
    "symlang",
    "unit_square_mesh",
    "validate_mesh",
]
