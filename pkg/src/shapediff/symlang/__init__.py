"""Symbolic integrands, forms, and Gateaux differentiation."""

from shapediff.symlang.degree import estimate_quadrature_degree
from shapediff.symlang.differentiation import (
    gateaux_derivative,
    propagate_grads,
    prune_zeros,
    replace,
)
from shapediff.symlang.expr import (
    Abs,
    Argument,
    Coefficient,
    Constant,
    Cos,
    Det,
    Div,
    Division,
    Dot,
    Expr,
    FacetNormal,
    Grad,
    Identity,
    Indexed,
    Inner,
    Inverse,
    ListTensor,
    Outer,
    Power,
    Product,
    ReferenceGrad,
    ReferenceNormal,
    ReferenceValue,
    Sign,
    Sin,
    SpatialCoordinate,
    Sqrt,
    Sum,
    TestFunction,
    Trace,
    Transpose,
    TrialFunction,
    Zero,
    as_expr,
    as_matrix,
    as_vector,
    cos,
    det,
    div,
    dot,
    grad,
    inner,
    inv,
    outer,
    sign,
    sin,
    sqrt,
    tr,
    transpose,
)
from shapediff.symlang.form import CELL, EXTERIOR_FACET, Form, IntegralTerm, Measure, ds, dx
from shapediff.symlang.printer import sexpr
