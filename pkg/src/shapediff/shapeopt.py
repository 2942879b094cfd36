"""Taylor tests, Riesz representatives and a steepest-descent shape optimizer."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from shapediff.assemble import DirichletBC, assemble, homogenize
from shapediff.errors import InvertedCell, NonConvergence, SingularMatrix
from shapediff.geometry import Function, move_mesh, validate_mesh
from shapediff.pullback import derivative, shape_derivative
from shapediff.solve import adjoint_solve, lagrangian, newton_solve, solve_linear
from shapediff.symlang import expr as E
from shapediff.symlang.form import Form, dx

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# functionals


class ShapeFunctional:
    """A functional whose integrand does not depend on a PDE solution."""

    def __init__(self, form):
        if form.arity != 0:
            raise ValueError("a shape functional must have no Arguments")
        self.form = form
        self.mesh = form.domain

    def update(self):
        """Hook called after the mesh moved."""

    def value(self):
        return assemble(self.form)

    def gradient(self):
        """Shape derivative as a vector over the coordinate DOFs."""
        return assemble(shape_derivative(self.form))

    def derivative(self, V):
        return assemble(shape_derivative(self.form, 1, [V]))

    def second_derivative(self, V, W):
        return assemble(shape_derivative(self.form, 2, [V, W]))


class ConstrainedShapeFunctional(ShapeFunctional):
    """``J(u(X), X)`` where ``u`` solves ``F(u; v) = 0`` on the current mesh.

    Derivatives use the Lagrangian ``J + F(u; p)`` with the adjoint ``p``.
    The second derivative is the reduced Hessian
    ``L_XX + L_Xu[., du_W] + L_uX[du_V, .] + L_uu[du_V, du_W]`` where the
    tangent ``du_V`` solves ``F_u[du] = -F_X[V]``.
    """

    def __init__(self, objective, residual, state, bcs=(), adjoint=None, tol=1e-11):
        self.form = objective
        self.residual = residual
        self.state = state
        self.bcs = [bcs] if isinstance(bcs, DirichletBC) else list(bcs)
        self.adjoint = adjoint if adjoint is not None else Function(state.space, name="p")
        self.mesh = objective.domain
        self.tol = tol
        self.lagrangian = lagrangian(objective, residual, self.adjoint)
        self._fresh = False

    def update(self):
        self._fresh = False

    def solve_state(self):
        newton_solve(self.residual, self.state, self.bcs, tol=self.tol)

    def _ensure(self):
        if not self._fresh:
            self.solve_state()
            adjoint_solve(self.lagrangian, self.state, self.adjoint, self.bcs)
            self._fresh = True

    def value(self):
        self._ensure()
        return assemble(self.form)

    def gradient(self):
        self._ensure()
        return assemble(shape_derivative(self.lagrangian))

    def derivative(self, V):
        self._ensure()
        return assemble(shape_derivative(self.lagrangian, 1, [V]))

    def tangent(self, V):
        """State sensitivity ``du`` along the mesh perturbation ``V``."""
        self._ensure()
        u = self.state
        hom = homogenize(self.bcs)
        A = assemble(derivative(self.residual, u, E.TrialFunction(u.space)), hom)
        b = assemble(shape_derivative(self.residual, 1, [V]), hom)
        return Function(u.space, solve_linear(A, -b), name="du")

    def second_derivative(self, V, W):
        self._ensure()
        L, u = self.lagrangian, self.state
        du_v, du_w = self.tangent(V), (self.tangent(W) if W is not V else None)
        du_w = du_w if du_w is not None else du_v
        LX_v = shape_derivative(L, 1, [V])
        LX_w = shape_derivative(L, 1, [W])
        total = assemble(shape_derivative(L, 2, [V, W]))
        total += assemble(derivative(LX_v, u, du_w))
        total += assemble(derivative(LX_w, u, du_v))
        total += assemble(derivative(derivative(L, u, du_v), u, du_w))
        return total


def as_functional(J):
    return J if isinstance(J, ShapeFunctional) else ShapeFunctional(J)


# ---------------------------------------------------------------------------
# Taylor test


@dataclass
class TaylorReport:
    steps: np.ndarray
    values: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray | None
    slope1: float
    slope2: float | None
    dropped: list = field(default_factory=list)

    def rows(self):
        for i, s in enumerate(self.steps):
            d2 = self.delta2[i] if self.delta2 is not None else float("nan")
            yield s, self.values[i], self.delta1[i], d2


def fit_slope(steps, deltas, count=6, floor=1e-13):
    """Least-squares slope of log(delta) against log(s) over the smallest admissible steps."""
    steps = np.asarray(steps, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    ok = np.isfinite(deltas) & (deltas > floor)
    idx = np.flatnonzero(ok)
    idx = idx[np.argsort(steps[idx])][:count]
    if len(idx) < 2:
        return float("nan")
    return float(np.polyfit(np.log(steps[idx]), np.log(deltas[idx]), 1)[0])


def random_direction(mesh, seed=42):
    """Per-DOF uniform values in [-1, 1] on the coordinate space."""
    rng = np.random.default_rng(seed)
    space = mesh.coordinates.space
    return Function(space, rng.uniform(-1.0, 1.0, space.dim), name="V")


def taylor_test(J, mesh=None, V=None, orders=(1, 2), seed=42, steps=None, fit_count=6):
    """Remainders of the first/second-order Taylor expansions along ``V``.

    The mesh is moved by ``s V``, ``J`` re-evaluated (re-solving the state
    for constrained functionals) and restored exactly afterwards.
    """
    J = as_functional(J)
    mesh = mesh if mesh is not None else J.mesh
    if V is None:
        V = random_direction(mesh, seed)
    if steps is None:
        steps = 2.0 ** -np.arange(1, 11)
    steps = np.asarray(steps, dtype=float)
    orders = set(orders)

    J0 = J.value()
    d1 = J.derivative(V)
    d2 = J.second_derivative(V, V) if 2 in orders else None
    state = getattr(J, "state", None)
    saved = state.dat.copy() if state is not None else None

    values = np.full(len(steps), np.nan)
    dropped = []
    for i, s in enumerate(steps):
        move_mesh(mesh, V, s)
        J.update()
        try:
            if validate_mesh(mesh) <= 0:
                raise InvertedCell(-1, validate_mesh(mesh))
            values[i] = J.value()
        except InvertedCell:
            dropped.append(float(s))
            log.warning("taylor test: step %g inverts cells, sample dropped", s)
        finally:
            move_mesh(mesh, V, -s)
            if state is not None:
                state.dat[:] = saved
            J.update()
    J.value()

    delta1 = np.abs(values - J0 - steps * d1)
    delta2 = np.abs(values - J0 - steps * d1 - 0.5 * steps**2 * d2) if d2 is not None else None
    return TaylorReport(
        steps=steps,
        values=values,
        delta1=delta1,
        delta2=delta2,
        slope1=fit_slope(steps, delta1, fit_count),
        slope2=fit_slope(steps, delta2, fit_count) if delta2 is not None else None,
        dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Riesz representative and descent


def laplace_matrix(space, bcs=()):
    U, W = E.TrialFunction(space), E.TestFunction(space)
    return assemble(E.inner(E.grad(U), E.grad(W)) * dx, bcs)


def riesz_representative(dJ, space, fixed_markers, method="cg"):
    """Solve ``(grad V, grad W) = -dJ[W]`` with ``V = 0`` on ``fixed_markers``."""
    fixed_markers = [int(m) for m in fixed_markers]
    if not fixed_markers:
        raise SingularMatrix("the vector Laplacian is singular without fixed boundaries")
    bc = DirichletBC(space, 0.0, fixed_markers)
    A = laplace_matrix(space, [bc])
    rhs = -np.asarray(dJ, dtype=float).copy()
    rhs[bc.dofs] = 0.0
    return Function(space, solve_linear(A, rhs, method=method, tol=1e-12), name="V")


def gradient_norm(dJ, V):
    """``sqrt(-dJ[V])`` for the Riesz representative ``V``."""
    return math.sqrt(max(-float(np.dot(dJ, V.dat)), 0.0))


@dataclass
class OptimizeConfig:
    functional: ShapeFunctional
    fixed_markers: tuple = (1, 2)
    step_size: float = 0.01
    iterations: int = 100
    alpha: float = 10.0
    min_step: float = 1e-8
    solver: str = "cg"


@dataclass
class HistoryRecord:
    iter: int
    J: float
    gradnorm: float
    volume: float
    step: float
    penalized: float
    rejected: int

    FIELDS = ("iter", "J", "gradnorm", "volume", "step", "penalized", "rejected")

    def as_row(self):
        return [getattr(self, k) for k in self.FIELDS]


def optimize(config, callback=None):
    """Fixed-step steepest descent with Laplace smoothing and a quadratic volume penalty.

    A step that would invert a cell is rejected and the step size halved;
    the number of rejections is stored with the next history record.
    ``callback(k, mesh, V)`` runs after each record.
    """
    J = config.functional
    mesh = J.mesh
    space = mesh.coordinates.space
    vol_form = 1.0 * dx(domain=mesh)
    vol_grad = shape_derivative(vol_form)
    vol0 = assemble(vol_form)
    step = float(config.step_size)
    history = []
    rejected = 0
    for k in range(config.iterations + 1):
        value = J.value()
        vol = assemble(vol_form)
        penalty = config.alpha * (vol - vol0) ** 2
        dJ = J.gradient() + 2.0 * config.alpha * (vol - vol0) * assemble(vol_grad)
        V = riesz_representative(dJ, space, config.fixed_markers, config.solver)
        record = HistoryRecord(k, value, gradient_norm(dJ, V), vol, step, value + penalty, rejected)
        history.append(record)
        log.info("iter %d J=%.8g |g|=%.3e vol=%.6f step=%g", k, value, record.gradnorm, vol, step)
        if callback is not None:
            callback(k, mesh, V)
        if k == config.iterations:
            break
        rejected = 0
        while True:
            move_mesh(mesh, V, step)
            if validate_mesh(mesh) > 0:
                break
            move_mesh(mesh, V, -step)
            rejected += 1
            step *= 0.5
            if step < config.min_step:
                raise NonConvergence(
                    f"step size fell below {config.min_step:g} while avoiding inverted cells",
                    [r.penalized for r in history],
                )
        J.update()
    return history


__all__ = [
    "ConstrainedShapeFunctional",
    "HistoryRecord",
    "OptimizeConfig",
    "ShapeFunctional",
    "TaylorReport",
    "fit_slope",
    "gradient_norm",
    "laplace_matrix",
    "optimize",
    "random_direction",
    "riesz_representative",
    "taylor_test",
]
