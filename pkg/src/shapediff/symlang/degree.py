"""Polynomial-degree estimation used to pick quadrature rules."""

from __future__ import annotations

from shapediff.symlang import expr as E

MIN_DEGREE = 1
MAX_DEGREE = 20
# bump applied to the operand degree of non-polynomial nodes
NONPOLY_BUMP = 2


def _raw_degrees(e, coeff_degrees, coordinate_degree):
    deg = {}
    for n in E.unique_nodes(e):
        ops = [deg[o] for o in n.operands]
        if isinstance(n, (E.Zero, E.Constant, E.FacetNormal, E.ReferenceNormal)):
            d = 0
        elif isinstance(n, E.SpatialCoordinate):
            d = coordinate_degree
        elif isinstance(n, E.FormArgument):
            d = coeff_degrees.get(n, n.space.degree) if coeff_degrees else n.space.degree
        elif isinstance(n, (E.Grad, E.Div, E.ReferenceGrad)):
            d = max(ops[0] - 1, 0)
        elif isinstance(n, (E.Sum, E.ListTensor)):
            d = max(ops)
        elif isinstance(n, (E.Product, E.Inner, E.Dot, E.Outer)):
            d = ops[0] + ops[1]
        elif isinstance(n, (E.Transpose, E.Trace, E.Indexed, E.ReferenceValue)):
            d = ops[0]
        elif isinstance(n, E.Det):
            d = 2 * ops[0]
        elif isinstance(n, E.Power):
            d = n.exponent * ops[0] if n.exponent >= 0 else ops[0] + NONPOLY_BUMP
        elif isinstance(n, E.Division):
            d = ops[0] + (ops[1] + NONPOLY_BUMP if ops[1] else 0)
        elif isinstance(n, (E.Inverse, E.Sin, E.Cos, E.Sqrt, E.Abs)):
            # non-polynomial of a cellwise constant stays constant
            d = ops[0] + NONPOLY_BUMP if ops[0] else 0
        elif isinstance(n, E.Sign):
            d = 0
        else:
            raise TypeError(f"no degree rule for {type(n).__name__}")
        deg[n] = d
    return deg[e]


def estimate_quadrature_degree(e, coeff_degrees=None, coordinate_degree=1):
    """Estimated total polynomial degree of ``e``, clamped to [1, 20].

    Products add degrees, sums take the maximum, gradients lower the degree
    by one and non-polynomial functions add two to their operand degree.
    """
    d = _raw_degrees(e, coeff_degrees or {}, coordinate_degree)
    return int(min(max(d, MIN_DEGREE), MAX_DEGREE))
