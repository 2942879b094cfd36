"""Immutable expression trees for integrands.

Every node carries its value shape: ``()`` for scalars, ``(2,)`` for
vectors and ``(2, 2)`` for matrices. Shapes are checked when a node is
built, so an ill-formed tree can never exist. Nodes hash and compare
structurally; the hash is computed once at construction.
"""

from __future__ import annotations

import itertools
import numbers

import numpy as np

from shapediff.errors import ShapeMismatch

SCALAR = ()
VECTOR = (2,)
MATRIX = (2, 2)


def _shape_name(shape):
    return {SCALAR: "scalar", VECTOR: "vector-2", MATRIX: "matrix-2x2"}.get(shape, str(shape))


def _mismatch(op, a, b):
    return ShapeMismatch(
        f"{op}: incompatible operand shapes {_shape_name(a.shape)} and {_shape_name(b.shape)}"
    )


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ("operands", "shape", "_hash")

    def __init__(self, operands, shape):
        self.operands = tuple(operands)
        self.shape = tuple(shape)
        self._hash = hash((type(self).__name__, self._data(), self.shape, self.operands))

    def _data(self):
        return ()

    def __setattr__(self, name, value):
        if hasattr(self, "_hash"):
            raise AttributeError("expressions are immutable")
        object.__setattr__(self, name, value)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return (
            type(self) is type(other)
            and self.shape == other.shape
            and self._data() == other._data()
            and self.operands == other.operands
        )

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        from shapediff.symlang.printer import sexpr

        return sexpr(self)

    __str__ = __repr__

    @property
    def rank(self):
        return len(self.shape)

    def reconstruct(self, *operands):
        """Same node kind and payload with new operands."""
        raise NotImplementedError(type(self).__name__)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if other is NotImplemented:
            return NotImplemented
        return Sum(self, other)

    def __radd__(self, other):
        other = as_expr(other)
        if other is NotImplemented:
            return NotImplemented
        return Sum(other, self)

    def __sub__(self, other):
        other = as_expr(other)
        if other is NotImplemented:
            return NotImplemented
        return Sum(self, Product(Constant(-1.0), other))

    def __rsub__(self, other):
        other = as_expr(other)
        if other is NotImplemented:
            return NotImplemented
        return Sum(other, Product(Constant(-1.0), self))

    def __neg__(self):
        return Product(Constant(-1.0), self)

    def __pos__(self):
        return self

    def __mul__(self, other):
        o = as_expr(other)
        if o is NotImplemented:
            return NotImplemented
        if self.shape and o.shape:
            return Dot(self, o)
        return Product(self, o)

    def __rmul__(self, other):
        o = as_expr(other)
        if o is NotImplemented:
            return NotImplemented
        return Product(o, self)

    def __matmul__(self, other):
        o = as_expr(other)
        if o is NotImplemented:
            return NotImplemented
        return Dot(self, o)

    def __truediv__(self, other):
        o = as_expr(other)
        if o is NotImplemented:
            return NotImplemented
        return Division(self, o)

    def __rtruediv__(self, other):
        o = as_expr(other)
        if o is NotImplemented:
            return NotImplemented
        return Division(o, self)

    def __pow__(self, k):
        if isinstance(k, numbers.Integral):
            return Power(self, int(k))
        if isinstance(k, numbers.Real) and float(k) == 0.5:
            return Sqrt(self)
        raise TypeError("only integer powers (and 0.5 for sqrt) are supported")

    def __getitem__(self, index):
        return Indexed(self, index)

    @property
    def T(self):
        return Transpose(self)

    def __iter__(self):
        if not self.shape:
            raise TypeError("scalar expression is not iterable")
        return (self[i] for i in range(self.shape[0]))

    def __len__(self):
        if not self.shape:
            raise TypeError("scalar expression has no length")
        return self.shape[0]


def as_expr(value):
    """Wrap numbers and nested sequences as Constants; pass Exprs through."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, numbers.Real):
        return Constant(float(value))
    if isinstance(value, np.ndarray) and value.dtype != object:
        return Constant(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        items = [as_expr(v) for v in value]
        if any(i is NotImplemented for i in items):
            return NotImplemented
        if all(isinstance(i, Constant) for i in items):
            return Constant(np.array([i.value for i in items]))
        return ListTensor(*items)
    return NotImplemented


# ---------------------------------------------------------------------------
# terminals


class Terminal(Expr):
    __slots__ = ()

    def reconstruct(self, *operands):
        return self


class Zero(Terminal):
    __slots__ = ()

    def __init__(self, shape=SCALAR):
        super().__init__((), shape)


class Constant(Terminal):
    """Scalar, vector or matrix literal."""

    __slots__ = ("value",)

    def __init__(self, value):
        arr = np.array(value, dtype=float)
        if arr.shape not in (SCALAR, VECTOR, MATRIX):
            raise ShapeMismatch(f"unsupported constant shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "value", arr)
        super().__init__((), arr.shape)

    def _data(self):
        return tuple(self.value.ravel().tolist())


def Identity():
    return Constant(np.eye(2))


def as_vector(components):
    return ListTensor(*[as_expr(c) for c in components])


def as_matrix(rows):
    return ListTensor(*[as_vector(r) if isinstance(r, (list, tuple)) else r for r in rows])


class _DomainTerminal(Terminal):
    __slots__ = ("domain",)

    def __init__(self, domain, shape):
        object.__setattr__(self, "domain", domain)
        super().__init__((), shape)

    def _data(self):
        return (id(self.domain),)


class SpatialCoordinate(_DomainTerminal):
    """Physical point x on a mesh."""

    __slots__ = ()

    def __init__(self, domain):
        super().__init__(domain, VECTOR)


class FacetNormal(_DomainTerminal):
    """Outward unit normal of the physical boundary (facet integrals only)."""

    __slots__ = ()

    def __init__(self, domain):
        super().__init__(domain, VECTOR)


class ReferenceNormal(_DomainTerminal):
    """Outward unit normal of the reference cell facet being integrated."""

    __slots__ = ()

    def __init__(self, domain):
        super().__init__(domain, VECTOR)


_coefficient_counter = itertools.count()


class FormArgument(Terminal):
    __slots__ = ("space",)

    @property
    def domain(self):
        return self.space.mesh

    def ufl_degree(self):
        return self.space.degree


class Coefficient(FormArgument):
    """A known field living in a finite element space.

    Subclasses (``geometry.Function``) attach the DOF values; the symbolic
    layer only needs the space's value shape and polynomial degree.
    """

    __slots__ = ("count", "name")

    def __init__(self, space, name=None):
        count = next(_coefficient_counter)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "count", count)
        object.__setattr__(self, "name", name or f"w{count}")
        Expr.__init__(self, (), space.value_shape)

    def _data(self):
        return ("coefficient", self.count)

    # mutable subclasses add __dict__-free slots; allow their own attributes
    def __setattr__(self, name, value):
        if name in ("operands", "shape", "_hash", "space", "count", "name"):
            Expr.__setattr__(self, name, value)
        else:
            object.__setattr__(self, name, value)


class Argument(FormArgument):
    """Placeholder for a basis function: number 0 is the test, 1 the trial."""

    __slots__ = ("number",)

    def __init__(self, space, number):
        if number not in (0, 1, 2, 3):
            raise ValueError(f"argument number must be small non-negative, got {number}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "number", number)
        super().__init__((), space.value_shape)

    def _data(self):
        return ("argument", self.number, self.space)


def TestFunction(space):
    return Argument(space, 0)


def TrialFunction(space):
    return Argument(space, 1)


# ---------------------------------------------------------------------------
# operators


class Operator(Expr):
    __slots__ = ()

    def reconstruct(self, *operands):
        return type(self)(*operands)


class Sum(Operator):
    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if a.shape != b.shape:
            raise _mismatch("Sum", a, b)
        super().__init__((a, b), a.shape)


class Product(Operator):
    """Scalar times scalar/vector/matrix."""

    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if a.shape and b.shape:
            raise _mismatch("Product", a, b)
        super().__init__((a, b), a.shape or b.shape)


class Division(Operator):
    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if b.shape:
            raise _mismatch("Division", a, b)
        super().__init__((a, b), a.shape)


class Power(Operator):
    __slots__ = ("exponent",)

    def __init__(self, a, exponent):
        a = as_expr(a)
        if a.shape:
            raise ShapeMismatch(f"Power: operand must be scalar, got {_shape_name(a.shape)}")
        if not isinstance(exponent, numbers.Integral):
            raise TypeError("Power exponent must be an integer")
        object.__setattr__(self, "exponent", int(exponent))
        super().__init__((a,), SCALAR)

    def _data(self):
        return (self.exponent,)

    def reconstruct(self, a):
        return Power(a, self.exponent)


class Inner(Operator):
    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if a.shape != b.shape:
            raise _mismatch("Inner", a, b)
        super().__init__((a, b), SCALAR)


class Dot(Operator):
    """Contraction of the last index of ``a`` with the first of ``b``."""

    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if not a.shape or not b.shape:
            raise _mismatch("Dot", a, b)
        super().__init__((a, b), a.shape[:-1] + b.shape[1:])


class Outer(Operator):
    __slots__ = ()

    def __init__(self, a, b):
        a, b = as_expr(a), as_expr(b)
        if a.shape != VECTOR or b.shape != VECTOR:
            raise _mismatch("Outer", a, b)
        super().__init__((a, b), MATRIX)


class _MatrixUnary(Operator):
    __slots__ = ()
    _result = MATRIX

    def __init__(self, a):
        a = as_expr(a)
        if a.shape != MATRIX:
            raise ShapeMismatch(
                f"{type(self).__name__}: requires a 2x2 matrix, got {_shape_name(a.shape)}"
            )
        super().__init__((a,), self._result)


class Transpose(_MatrixUnary):
    __slots__ = ()


class Inverse(_MatrixUnary):
    __slots__ = ()


class Trace(_MatrixUnary):
    __slots__ = ()
    _result = SCALAR


class Det(_MatrixUnary):
    __slots__ = ()
    _result = SCALAR


class _ScalarUnary(Operator):
    __slots__ = ()

    def __init__(self, a):
        a = as_expr(a)
        if a.shape:
            raise ShapeMismatch(
                f"{type(self).__name__}: operand must be scalar, got {_shape_name(a.shape)}"
            )
        super().__init__((a,), SCALAR)


class Abs(_ScalarUnary):
    __slots__ = ()


class Sign(_ScalarUnary):
    """sign(a) with sign(0) = 0."""

    __slots__ = ()


class Sqrt(_ScalarUnary):
    __slots__ = ()


class Sin(_ScalarUnary):
    __slots__ = ()


class Cos(_ScalarUnary):
    __slots__ = ()


class Indexed(Operator):
    """Component access: ``v[i]``, ``A[i, j]`` or row ``A[i]``."""

    __slots__ = ("index",)

    def __init__(self, a, index):
        a = as_expr(a)
        if isinstance(index, numbers.Integral):
            index = (int(index),)
        index = tuple(int(i) for i in index)
        if not a.shape or len(index) > len(a.shape) or any(not 0 <= i < 2 for i in index):
            raise ShapeMismatch(f"Indexed: index {index} invalid for {_shape_name(a.shape)}")
        object.__setattr__(self, "index", index)
        super().__init__((a,), a.shape[len(index):])

    def _data(self):
        return self.index

    def reconstruct(self, a):
        return Indexed(a, self.index)


class ListTensor(Operator):
    """Vector from two scalars, or matrix from two row vectors."""

    __slots__ = ()

    def __init__(self, *components):
        components = [as_expr(c) for c in components]
        if len(components) != 2:
            raise ShapeMismatch(f"ListTensor: need exactly 2 components, got {len(components)}")
        a, b = components
        if a.shape != b.shape:
            raise _mismatch("ListTensor", a, b)
        if a.shape not in (SCALAR, VECTOR):
            raise ShapeMismatch("ListTensor: components must be scalars or vectors")
        super().__init__(components, (2,) + a.shape)


class Grad(Operator):
    """Physical gradient; vector-valued grads have rows = components."""

    __slots__ = ()

    def __init__(self, a):
        a = as_expr(a)
        if a.shape not in (SCALAR, VECTOR):
            raise ShapeMismatch(f"Grad: operand must be scalar or vector, got {_shape_name(a.shape)}")
        super().__init__((a,), a.shape + (2,))


class Div(Operator):
    __slots__ = ()

    def __init__(self, a):
        a = as_expr(a)
        if a.shape != VECTOR:
            raise ShapeMismatch(f"Div: operand must be a vector, got {_shape_name(a.shape)}")
        super().__init__((a,), SCALAR)


class ReferenceValue(Operator):
    """A form argument expressed through the reference basis: sum_m w_m b_m(x_hat)."""

    __slots__ = ()

    def __init__(self, a):
        if not isinstance(a, FormArgument):
            raise TypeError("ReferenceValue applies to coefficients and arguments only")
        super().__init__((a,), a.shape)


class ReferenceGrad(Operator):
    """Gradient with respect to reference coordinates of a ReferenceValue."""

    __slots__ = ()

    def __init__(self, a):
        a = as_expr(a)
        if not isinstance(a, ReferenceValue):
            raise TypeError("ReferenceGrad applies to ReferenceValue nodes only")
        super().__init__((a,), a.shape + (2,))


# convenience constructors mirroring the usual form-language spelling ---------


def grad(a):
    return Grad(a)


def div(a):
    return Div(a)


def inner(a, b):
    return Inner(a, b)


def dot(a, b):
    return Dot(a, b)


def outer(a, b):
    return Outer(a, b)


def transpose(a):
    return Transpose(a)


def tr(a):
    return Trace(a)


def det(a):
    return Det(a)


def inv(a):
    return Inverse(a)


def sqrt(a):
    return Sqrt(a)


def sin(a):
    return Sin(a)


def cos(a):
    return Cos(a)


def sign(a):
    return Sign(a)


def abs_(a):
    return Abs(a)


def is_zero(e):
    return isinstance(e, Zero) or (isinstance(e, Constant) and not np.any(e.value))


# traversal -------------------------------------------------------------------


def unique_nodes(expr):
    """All distinct nodes of the DAG in post-order (children first)."""
    seen = set()
    order = []
    stack = [(expr, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node in seen:
            continue
        seen.add(node)
        stack.append((node, True))
        for op in reversed(node.operands):
            if op not in seen:
                stack.append((op, False))
    # a node can be appended twice if reached from two parents before expansion
    out, emitted = [], set()
    for n in order:
        if n not in emitted:
            emitted.add(n)
            out.append(n)
    return out


def map_dag(expr, fn):
    """Rebuild a DAG bottom-up; ``fn(node, new_operands)`` returns the new node."""
    cache = {}
    for node in unique_nodes(expr):
        cache[node] = fn(node, tuple(cache[op] for op in node.operands))
    return cache[expr]


def terminals(expr):
    return [n for n in unique_nodes(expr) if isinstance(n, Terminal)]


def extract_arguments(expr):
    return sorted(
        {n for n in terminals(expr) if isinstance(n, Argument)}, key=lambda a: a.number
    )


def extract_coefficients(expr):
    return sorted(
        {n for n in terminals(expr) if isinstance(n, Coefficient)}, key=lambda c: c.count
    )


def extract_domain(expr):
    for n in terminals(expr):
        dom = getattr(n, "domain", None)
        if dom is not None:
            return dom
    return None
