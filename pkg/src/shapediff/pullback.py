"""Pull integrals back to the reference cell and differentiate them with respect
to the mesh coordinate field.

After pull-back the integrand only refers to reference quantities: reference
values/gradients of form arguments, the cell Jacobian ``J = grad_ref(X)``,
its inverse ``K`` and ``det J``. Since ``J`` is built from the coordinate
coefficient ``X``, a shape derivative is an ordinary Gateaux derivative with
respect to ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass

from shapediff.errors import UnsupportedNode
from shapediff.symlang import expr as E
from shapediff.symlang.degree import estimate_quadrature_degree
from shapediff.symlang.differentiation import gateaux_derivative, propagate_grads, prune_zeros
from shapediff.symlang.form import CELL, EXTERIOR_FACET, Form, IntegralTerm


@dataclass(frozen=True)
class ReferenceIntegrand(IntegralTerm):
    """Integral term whose integrand lives on the reference cell (measure scaling included)."""

    reference: bool = True


def jacobian(mesh):
    return E.ReferenceGrad(E.ReferenceValue(mesh.coordinates))


def _geometry(mesh):
    J = jacobian(mesh)
    K = E.Inverse(J)
    nref = E.ReferenceNormal(mesh)
    # Nanson: n ds = det(J) J^-T n_hat ds_hat
    scaled_normal = E.Dot(E.Transpose(K), nref)
    normal_norm = E.Sqrt(E.Inner(scaled_normal, scaled_normal))
    return J, K, scaled_normal, normal_norm


def pull_back_expression(integrand, mesh, measure=CELL):
    """Reference-space version of a physical expression, without measure scaling."""
    return prune_zeros(_map_body(propagate_grads(integrand), mesh, measure))


def _map_terminals(integrand, mesh, measure):
    J = jacobian(mesh)
    body = _map_body(integrand, mesh, measure)
    scale = E.Abs(E.Det(J))
    if measure == EXTERIOR_FACET:
        scale = E.Product(scale, _geometry(mesh)[3])
    return prune_zeros(E.Product(body, scale))


def _map_body(integrand, mesh, measure):
    J, K, scaled_normal, normal_norm = _geometry(mesh)
    X = mesh.coordinates

    def fn(node, ops):
        if isinstance(node, E.SpatialCoordinate):
            return E.ReferenceValue(X)
        if isinstance(node, E.FormArgument):
            return E.ReferenceValue(node)
        if isinstance(node, E.FacetNormal):
            if measure != EXTERIOR_FACET:
                raise UnsupportedNode("the facet normal is only defined in facet integrals")
            return E.Division(scaled_normal, normal_norm)
        if isinstance(node, E.ReferenceNormal) and measure != EXTERIOR_FACET:
            raise UnsupportedNode("the reference normal is only defined in facet integrals")
        if isinstance(node, E.Grad):
            t = node.operands[0]
            if not isinstance(t, E.FormArgument):
                raise UnsupportedNode(
                    "second derivatives of degree-2 fields are not supported by the pull-back"
                )
            rg = E.ReferenceGrad(E.ReferenceValue(t))
            if t.shape == ():
                return E.Dot(E.Transpose(K), rg)
            return E.Dot(rg, K)
        if isinstance(node, E.Div):
            raise AssertionError("Div survives grad propagation")
        if isinstance(node, E.Terminal) or all(a is b for a, b in zip(ops, node.operands)):
            return node
        return node.reconstruct(*ops)

    return E.map_dag(integrand, fn)


def pull_back(term, degree=None):
    """Rewrite a physical integral term as a reference-cell integrand.

    ``x`` becomes ``sum_m X_m b_m``, ``grad u`` becomes ``K^T grad_ref u``,
    ``dx`` becomes ``|det J| dx_ref`` and ``ds`` becomes
    ``|det J| |K^T n_ref| ds_ref``. The quadrature degree is estimated on
    the physical integrand unless given explicitly.
    """
    if term.reference:
        return term
    mesh = term.domain
    if degree is None:
        degree = term.degree
    if degree is None:
        degree = estimate_quadrature_degree(term.integrand)
    expr = _map_terminals(propagate_grads(term.integrand), mesh, term.measure)
    return ReferenceIntegrand(expr, term.measure, term.subdomain, int(degree), mesh)


def _check_direction(mesh, direction):
    space = getattr(direction, "space", None)
    if space is None or space is not mesh.coordinates.space:
        raise TypeError("shape directions must live on the mesh's vector P1 coordinate space")


def coordinate_derivative(ri, order, directions):
    """Derivative of a reference integrand with respect to the mesh coordinates.

    ``directions`` holds ``order`` Arguments or vector P1 Functions.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    directions = list(directions)
    if len(directions) != order:
        raise ValueError(f"need {order} direction(s), got {len(directions)}")
    mesh = ri.domain
    X = mesh.coordinates
    expr = ri.integrand
    for v in directions:
        _check_direction(mesh, v)
        expr = gateaux_derivative(expr, X, v)
    degree = ri.degree
    if degree is None or not E.is_zero(expr):
        degree = max(degree or 1, estimate_quadrature_degree(expr))
    return ReferenceIntegrand(expr, ri.measure, ri.subdomain, degree, mesh)


def _fresh_arguments(form, count):
    mesh = form.domain
    start = form.arity
    space = mesh.coordinates.space
    return [E.Argument(space, start + i) for i in range(count)]


def shape_derivative(form, order=1, directions=None):
    """Shape derivative of ``form``; arguments are appended for missing directions."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if form.arity > 1:
        raise ValueError("shape derivatives are available for functionals and residuals only")
    if directions is None:
        directions = _fresh_arguments(form, order)
    terms = []
    for t in form.terms:
        ri = coordinate_derivative(pull_back(t), order, directions)
        if not E.is_zero(ri.integrand):
            terms.append(ri)
    return Form(terms)


def derivative(form, coefficient, direction=None):
    """Gateaux derivative of every term of ``form`` with respect to ``coefficient``.

    Differentiating with respect to ``mesh.coordinates`` gives the shape
    derivative. Without a direction a new Argument is introduced.
    """
    if direction is None:
        direction = E.Argument(coefficient.space, form.arity)
    mesh = form.domain
    if mesh is not None and coefficient is mesh.coordinates:
        terms = []
        for t in form.terms:
            ri = coordinate_derivative(pull_back(t), 1, [direction])
            if not E.is_zero(ri.integrand):
                terms.append(ri)
        return Form(terms)

    def fn(term):
        new = gateaux_derivative(term.integrand, coefficient, direction)
        if E.is_zero(new):
            return None
        degree = term.degree
        if term.reference:
            degree = max(degree or 1, estimate_quadrature_degree(new))
        return term.with_integrand(new, degree=degree)

    return form.map_integrands(fn)


def reference_form(form):
    """Pull back every physical term of ``form``."""
    return Form(pull_back(t) for t in form.terms)


__all__ = [
    "CELL",
    "EXTERIOR_FACET",
    "ReferenceIntegrand",
    "coordinate_derivative",
    "derivative",
    "jacobian",
    "pull_back",
    "pull_back_expression",
    "reference_form",
    "shape_derivative",
]
