"""Three reference problems with hand-derived shape derivatives used as oracles.

1. ``J = int u dx`` with ``u = x^2 + y^2 - 1`` given analytically.
2. ``J = int v + |grad v|^2 dx`` with ``v`` the P1 interpolant of ``sin(x) cos(y)``,
   transported with the mesh.
3. ``J = int u dx`` where ``u`` solves ``-lap u + u = xy`` with zero Neumann data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from shapediff.geometry import Function, FunctionSpace
from shapediff.shapeopt import ConstrainedShapeFunctional, ShapeFunctional
from shapediff.symlang import expr as E
from shapediff.symlang.form import Form, dx


@dataclass
class Example:
    number: int
    mesh: object
    functional: ShapeFunctional
    oracle: Callable  # W -> Form, linear in the direction W

    def automatic_gradient(self):
        return self.functional.gradient()

    def oracle_gradient(self):
        from shapediff.assemble import assemble

        self.functional.value()  # solves state/adjoint where needed
        W = E.TestFunction(self.mesh.coordinates.space)
        return assemble(self.oracle(W))


def example1(mesh):
    x = E.SpatialCoordinate(mesh)
    u = x[0] ** 2 + x[1] ** 2 - 1.0
    J = u * dx

    def oracle(W):
        return (E.inner(E.grad(u), W) + u * E.div(W)) * dx

    return Example(1, mesh, ShapeFunctional(J), oracle)


def example2(mesh):
    v = Function(FunctionSpace(mesh, 1), name="v")
    v.interpolate(E.sin(E.SpatialCoordinate(mesh)[0]) * E.cos(E.SpatialCoordinate(mesh)[1]))
    gv = E.grad(v)
    J = (v + E.inner(gv, gv)) * dx

    def oracle(W):
        return ((v + E.inner(gv, gv)) * E.div(W) - 2.0 * E.inner(gv, E.dot(E.grad(W), gv))) * dx

    return Example(2, mesh, ShapeFunctional(J), oracle)


def state_problem(mesh, degree=1):
    """Neumann problem ``-lap u + u = xy``: returns ``(u, residual, f)``."""
    x = E.SpatialCoordinate(mesh)
    space = FunctionSpace(mesh, degree)
    u = Function(space, name="u")
    v = E.TestFunction(space)
    f = x[0] * x[1]
    F = (E.inner(E.grad(u), E.grad(v)) + u * v - f * v) * dx
    return u, F, f


def example3(mesh, objective=None):
    x = E.SpatialCoordinate(mesh)
    u, F, f = state_problem(mesh)
    J = objective(u) if objective is not None else u * dx
    functional = ConstrainedShapeFunctional(J, F, u)
    p = functional.adjoint
    grad_f = E.ListTensor(x[1], x[0])

    def oracle(W):
        if objective is not None:
            raise ValueError("the hand-derived formula only covers J = int u dx")
        DW = E.grad(W)
        return (
            (u + E.inner(E.grad(u), E.grad(p)) + u * p - f * p) * E.div(W)
            - p * E.inner(grad_f, W)
            - E.inner(E.grad(u), E.dot(DW + E.Transpose(DW), E.grad(p)))
        ) * dx

    return Example(3, mesh, functional, oracle)


EXAMPLES = {1: example1, 2: example2, 3: example3}


def build_example(number, mesh):
    try:
        return EXAMPLES[int(number)](mesh)
    except KeyError:
        raise ValueError(f"unknown example {number!r}; choose 1, 2 or 3") from None


__all__ = ["EXAMPLES", "Example", "build_example", "example1", "example2", "example3", "state_problem"]
