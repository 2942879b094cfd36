"""Linear solves, Newton's method and adjoint equations."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from shapediff.assemble import DirichletBC, apply_bc_to_function, assemble, homogenize
from shapediff.errors import NonConvergence, SingularMatrix
from shapediff.pullback import derivative
from shapediff.symlang import expr as E
from shapediff.symlang.differentiation import replace

log = logging.getLogger(__name__)


@dataclass
class LinearSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m or len(self.rhs) != n:
            raise ValueError(f"system dimensions disagree: matrix {self.matrix.shape}, rhs {len(self.rhs)}")


def solve_linear(system, rhs=None, method="direct", tol=1e-10):
    """Solve ``A x = b``. Accepts a :class:`LinearSystem` or a matrix and rhs."""
    if isinstance(system, LinearSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system, rhs
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    if method == "direct":
        # explicit check: SuperLU may pivot past an exactly empty row on some builds
        empty = np.flatnonzero(np.diff(sp.csr_matrix(A).indptr) == 0)
        if len(empty):
            raise SingularMatrix(f"matrix has {len(empty)} empty row(s), first at {empty[0]}")
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("factorization produced non-finite values")
        return x
    if method == "cg":
        n = A.shape[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=10 * n)
        if info != 0 or not np.all(np.isfinite(x)):
            res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
            raise NonConvergence(f"CG did not converge in {10 * n} iterations (relative residual {res:.3e})", [res])
        return x
    raise ValueError(f"unknown linear solver {method!r}")


def _as_list(bcs):
    if bcs is None:
        return []
    if isinstance(bcs, DirichletBC):
        return [bcs]
    return list(bcs)


def newton_solve(residual, u, bcs=(), tol=1e-9, max_iter=20, method="direct"):
    """Drive the residual form ``F(u; v)`` to zero by Newton's method, updating ``u``.

    Returns the list of residual norms, starting with the initial one.
    """
    bcs = _as_list(bcs)
    for bc in bcs:
        apply_bc_to_function(u, bc)
    hom = homogenize(bcs)
    jac = derivative(residual, u, E.TrialFunction(u.space))
    if not len(jac):
        raise SingularMatrix("the residual does not depend on the unknown: Jacobian is identically zero")
    trace = []
    for it in range(max_iter + 1):
        F = assemble(residual, hom)
        norm = float(np.linalg.norm(F))
        trace.append(norm)
        log.debug("newton %d: |F| = %.3e", it, norm)
        if norm <= tol:
            return trace
        if it == max_iter or not np.isfinite(norm):
            break
        A = assemble(jac, hom)
        du = solve_linear(A, -F, method=method)
        u.dat += du
    raise NonConvergence(f"Newton did not converge in {max_iter} iterations (|F| = {trace[-1]:.3e})", trace)


def adjoint_system(lagrangian, u, p, bcs=()):
    """Matrix and right-hand side of the adjoint equation for ``L(u, p)``.

    ``L`` is affine in ``p``, so ``dL/du[v] = b[v] + A[v, p]`` with
    ``b = dL/du`` at ``p = 0``.
    """
    dLdu = derivative(lagrangian, u, E.TestFunction(u.space))
    A_form = derivative(dLdu, p, E.TrialFunction(p.space))
    hom = homogenize(_as_list(bcs))
    saved = p.dat.copy()
    p.dat[:] = 0.0
    try:
        b = assemble(dLdu, hom)
    finally:
        p.dat[:] = saved
    A = assemble(A_form, hom)
    return A, -b


def adjoint_solve(lagrangian, u, p, bcs=(), method="direct"):
    """Set ``p`` so that the Lagrangian is stationary with respect to ``u``."""
    A, rhs = adjoint_system(lagrangian, u, p, bcs)
    p.dat[:] = solve_linear(A, rhs, method=method)
    return p


def lagrangian(objective, residual, p):
    """``J + F(u; p)``: the residual's test function replaced by ``p``."""
    args = residual.arguments()
    if len(args) != 1:
        raise ValueError("the state residual must have exactly one Argument")
    return objective + residual.map_integrands(lambda t: t.with_integrand(replace(t.integrand, {args[0]: p})))


__all__ = [
    "LinearSystem",
    "adjoint_solve",
    "adjoint_system",
    "lagrangian",
    "newton_solve",
    "solve_linear",
]
