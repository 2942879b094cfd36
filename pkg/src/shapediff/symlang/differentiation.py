"""Gateaux differentiation, substitution and algebraic clean-up of expressions."""

from __future__ import annotations

from shapediff.errors import ShapeMismatch, UnsupportedNode
from shapediff.symlang import expr as E
from shapediff.symlang.expr import (
    Abs,
    Constant,
    Cos,
    Det,
    Div,
    Division,
    Dot,
    Grad,
    Indexed,
    Inner,
    Inverse,
    ListTensor,
    Outer,
    Power,
    Product,
    ReferenceGrad,
    ReferenceValue,
    Sign,
    Sin,
    Sqrt,
    Sum,
    Trace,
    Transpose,
    Zero,
    is_zero,
)

_LINEAR = (Sum, Transpose, Trace, Indexed, ListTensor, Grad, Div)


def _neg(a):
    return Product(Constant(-1.0), a)


def _rule(node, d, w, h):
    """Derivative of ``node`` given the derivatives ``d`` of its operands."""
    if isinstance(node, E.Terminal):
        return h if node == w else Zero(node.shape)
    ops = node.operands
    if isinstance(node, ReferenceValue):
        if ops[0] != w:
            return Zero(node.shape)
        if not isinstance(h, E.FormArgument):
            raise UnsupportedNode("reference-space directions must be a Coefficient or Argument")
        return ReferenceValue(h)
    if isinstance(node, ReferenceGrad):
        return Zero(node.shape) if is_zero(d[0]) else ReferenceGrad(d[0])
    if isinstance(node, _LINEAR):
        return node.reconstruct(*d)
    if isinstance(node, (Product, Inner, Dot, Outer)):
        a, b = ops
        t = type(node)
        return Sum(t(d[0], b), t(a, d[1]))
    if isinstance(node, Division):
        a, b = ops
        return Sum(Division(d[0], b), _neg(Division(Product(a, d[1]), Power(b, 2))))
    if isinstance(node, Power):
        k = node.exponent
        if k == 0:
            return Zero()
        return Product(Product(Constant(float(k)), Power(ops[0], k - 1)), d[0])
    if isinstance(node, Det):
        # d det(A)[H] = det(A) tr(A^-1 H)
        return Product(node, Trace(Dot(Inverse(ops[0]), d[0])))
    if isinstance(node, Inverse):
        # d A^-1[H] = -A^-1 H A^-1
        return _neg(Dot(Dot(node, d[0]), node))
    if isinstance(node, Abs):
        return Product(Sign(ops[0]), d[0])
    if isinstance(node, Sign):
        return Zero()
    if isinstance(node, Sqrt):
        return Division(d[0], Product(Constant(2.0), node))
    if isinstance(node, Sin):
        return Product(Cos(ops[0]), d[0])
    if isinstance(node, Cos):
        return _neg(Product(Sin(ops[0]), d[0]))
    raise UnsupportedNode(f"no derivative rule for {type(node).__name__}")


def gateaux_derivative(e, w, h):
    """Directional derivative of ``e`` with respect to coefficient ``w`` along ``h``.

    The raw derivative tree is built with explicit zeros and then pruned.
    ``Abs`` is differentiated through ``Sign`` with sign(0) = 0.
    """
    h = E.as_expr(h)
    if not isinstance(w, E.Coefficient):
        raise TypeError("can only differentiate with respect to a Coefficient")
    if h.shape != w.shape:
        raise ShapeMismatch(
            f"direction shape {h.shape} does not match coefficient shape {w.shape}"
        )
    d = {}
    for node in E.unique_nodes(e):
        d[node] = _rule(node, [d[o] for o in node.operands], w, h)
    return prune_zeros(d[e])


def _fold(node, ops):
    if isinstance(node, E.Terminal):
        if isinstance(node, Constant) and is_zero(node):
            return Zero(node.shape)
        return node
    z = [is_zero(o) for o in ops]
    shape = node.shape
    if isinstance(node, Sum):
        if z[0]:
            return ops[1]
        if z[1]:
            return ops[0]
    elif isinstance(node, Product):
        if any(z):
            return Zero(shape)
        a, b = ops
        if isinstance(a, Constant) and not a.shape:
            if a.value == 1.0:
                return b
            if isinstance(b, Constant) and not b.shape:
                return Constant(float(a.value) * float(b.value))
            if isinstance(b, Product) and isinstance(b.operands[0], Constant) and not b.operands[0].shape:
                return Product(Constant(float(a.value) * float(b.operands[0].value)), b.operands[1])
        if isinstance(b, Constant) and not b.shape and b.value == 1.0:
            return a
    elif isinstance(node, (Inner, Dot, Outer)):
        if any(z):
            return Zero(shape)
    elif isinstance(node, Division):
        if z[0]:
            return Zero(shape)
    elif isinstance(node, ListTensor):
        if all(z):
            return Zero(shape)
    elif isinstance(node, (Transpose, Trace, Det, Indexed, Grad, Div, ReferenceGrad, Sin, Sqrt, Abs, Sign)):
        if z[0]:
            return Zero(shape)
    elif isinstance(node, Power):
        if node.exponent == 0:
            return Constant(1.0)
        if node.exponent == 1:
            return ops[0]
        if z[0] and node.exponent > 0:
            return Zero(shape)
    elif isinstance(node, Cos):
        if z[0]:
            return Constant(1.0)
    if all(a is b for a, b in zip(ops, node.operands)):
        return node
    return node.reconstruct(*ops)


def prune_zeros(e):
    """Remove structural zeros: 0*a -> 0, a+0 -> a, linear ops of 0 -> 0."""
    return E.map_dag(e, _fold)


def replace(e, mapping):
    """Substitute terminals according to ``mapping`` (shapes must agree)."""
    mapping = {k: E.as_expr(v) for k, v in mapping.items()}
    for k, v in mapping.items():
        if k.shape != v.shape:
            raise ShapeMismatch(f"replace: {k!r} has shape {k.shape} but replacement has {v.shape}")

    def fn(node, ops):
        if isinstance(node, E.Terminal):
            return mapping.get(node, node)
        if all(a is b for a, b in zip(ops, node.operands)):
            return node
        return node.reconstruct(*ops)

    return E.map_dag(e, fn)


# ---------------------------------------------------------------------------
# physical gradient propagation


def _grad_terminal(t):
    if isinstance(t, (Zero, Constant)):
        return Zero(t.shape + (2,))
    if isinstance(t, E.SpatialCoordinate):
        return E.Identity()
    if isinstance(t, E.FormArgument):
        return Grad(t)
    raise UnsupportedNode(f"gradient of {type(t).__name__} is not available")


def _rank3(node):
    return UnsupportedNode(
        f"gradient of {type(node).__name__} would need a rank-3 tensor; rewrite the integrand"
    )


class _GradPusher:
    def __init__(self):
        self.cache = {}

    def __call__(self, a):
        if a not in self.cache:
            self.cache[a] = prune_zeros(self._grad(a))
        return self.cache[a]

    def _grad(self, a):
        g = self
        if isinstance(a, E.Terminal):
            return _grad_terminal(a)
        ops = a.operands
        if isinstance(a, Grad):
            inner_ = ops[0]
            if isinstance(inner_, E.FormArgument) and inner_.shape == ():
                return Zero(a.shape + (2,)) if inner_.space.degree == 1 else Grad(a)
            raise _rank3(a)
        if isinstance(a, Sum):
            return Sum(g(ops[0]), g(ops[1]))
        if isinstance(a, Product):
            x, y = ops
            if x.shape and not y.shape:
                x, y = y, x
            if not y.shape:
                return Sum(Product(x, g(y)), Product(y, g(x)))
            if y.shape == E.VECTOR:
                return Sum(Product(x, g(y)), Outer(y, g(x)))
            if _is_constant(a):
                return Zero(a.shape + (2,))
            raise _rank3(a)
        if isinstance(a, Division):
            x, y = ops
            if not x.shape:
                return Division(Sum(Product(y, g(x)), E.Product(Constant(-1.0), Product(x, g(y)))), Power(y, 2))
            if x.shape == E.VECTOR:
                return Sum(Division(g(x), y), E.Product(Constant(-1.0), Division(Outer(x, g(y)), Power(y, 2))))
            raise _rank3(a)
        if isinstance(a, Power):
            k = a.exponent
            return Product(Product(Constant(float(k)), Power(ops[0], k - 1)), g(ops[0]))
        if isinstance(a, Inner):
            x, y = ops
            if not x.shape:
                return Sum(Product(x, g(y)), Product(y, g(x)))
            if x.shape == E.VECTOR:
                return Sum(Dot(Transpose(g(x)), y), Dot(Transpose(g(y)), x))
            raise _rank3(a)
        if isinstance(a, Dot):
            x, y = ops
            if x.shape == E.VECTOR and y.shape == E.VECTOR:
                return Sum(Dot(Transpose(g(x)), y), Dot(Transpose(g(y)), x))
            if x.shape == E.MATRIX and y.shape == E.VECTOR and is_zero(g_mat(x)):
                return Dot(x, g(y))
            if x.shape == E.VECTOR and y.shape == E.MATRIX and is_zero(g_mat(y)):
                return Dot(Transpose(y), g(x))
            raise _rank3(a)
        if isinstance(a, Indexed):
            x = ops[0]
            if x.shape == E.VECTOR:
                return Indexed(g(x), a.index)
            raise _rank3(a)
        if isinstance(a, ListTensor):
            if a.shape == E.VECTOR:
                return ListTensor(g(ops[0]), g(ops[1]))
            raise _rank3(a)
        if isinstance(a, Sin):
            return Product(E.Cos(ops[0]), g(ops[0]))
        if isinstance(a, Cos):
            return Product(Constant(-1.0), Product(Sin(ops[0]), g(ops[0])))
        if isinstance(a, Abs):
            return Product(Sign(ops[0]), g(ops[0]))
        if isinstance(a, Sign):
            return Zero(E.VECTOR)
        if isinstance(a, Sqrt):
            return Division(g(ops[0]), Product(Constant(2.0), a))
        if isinstance(a, (Trace, Det, Inverse, Transpose, Outer, Div)):
            if all(_is_constant(o) for o in ops):
                return Zero(a.shape + (2,))
            raise _rank3(a)
        raise UnsupportedNode(f"cannot take the gradient of {type(a).__name__}")


def _is_constant(e):
    return all(
        isinstance(t, (Zero, Constant))
        for t in E.terminals(e)
    )


def g_mat(m):
    """Zero when the matrix expression is spatially constant, else itself."""
    return Zero(E.MATRIX) if _is_constant(m) else m


def propagate_grads(e):
    """Rewrite ``Grad``/``Div`` of compound expressions into gradients of terminals."""
    pusher = _GradPusher()

    def fn(node, ops):
        if isinstance(node, Grad):
            return pusher(ops[0])
        if isinstance(node, Div):
            return prune_zeros(Trace(pusher(ops[0])))
        if isinstance(node, E.Terminal) or all(a is b for a, b in zip(ops, node.operands)):
            return node
        return node.reconstruct(*ops)

    return E.map_dag(e, fn)
