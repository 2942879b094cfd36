import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shapediff import Function, FunctionSpace, VectorFunctionSpace, assemble, unit_square_mesh
from shapediff.errors import ShapeMismatch
from shapediff.symlang import expr as E
from shapediff.symlang import (
    Coefficient,
    dx,
    estimate_quadrature_degree,
    gateaux_derivative,
    prune_zeros,
    replace,
)
from shapediff.symlang.printer import sexpr


@pytest.fixture(scope="module")
def mesh():
    return unit_square_mesh(4)


@pytest.fixture(scope="module")
def P1(mesh):
    return FunctionSpace(mesh, 1)


@pytest.fixture(scope="module")
def VP1(mesh):
    return VectorFunctionSpace(mesh, 1)


def test_shape_rules(P1, VP1):
    u = Coefficient(P1, "u")
    V = Coefficient(VP1, "V")
    assert E.Inner(E.Grad(u), E.Grad(u)).shape == ()
    assert E.Det(E.Grad(V)).shape == ()
    assert E.Grad(V).shape == (2, 2)
    assert E.Trace(E.Grad(V)).shape == ()
    assert E.Inverse(E.Grad(V)).shape == (2, 2)


def test_shape_mismatch_names_both_shapes(P1, VP1):
    u = Coefficient(P1, "u")
    V = Coefficient(VP1, "V")
    with pytest.raises(ShapeMismatch) as info:
        E.Inner(u, V)
    msg = str(info.value)
    assert "scalar" in msg and "vector-2" in msg


@pytest.mark.parametrize("op", [E.Det, E.Inverse, E.Trace])
def test_matrix_ops_reject_vectors(VP1, op):
    with pytest.raises(ShapeMismatch):
        op(Coefficient(VP1, "V"))


def test_grad_of_matrix_rejected(VP1):
    with pytest.raises(ShapeMismatch):
        E.Grad(E.Grad(Coefficient(VP1, "V")))


def test_structural_equality_and_immutability(P1):
    u = Coefficient(P1, "u")
    a = E.inner(E.grad(u), E.grad(u)) + 1.0
    b = E.inner(E.grad(u), E.grad(u)) + 1.0
    assert a == b and hash(a) == hash(b)
    assert a != E.inner(E.grad(u), E.grad(u)) + 2.0
    with pytest.raises(AttributeError):
        a.operands = ()


def test_power_must_be_integer(P1):
    u = Coefficient(P1, "u")
    with pytest.raises(TypeError):
        u ** 1.5
    assert isinstance(u**0.5, E.Sqrt)


def test_printer_is_deterministic(P1):
    u = Coefficient(P1, "u")
    e = E.Sin(u) * 2.0
    assert sexpr(e) == sexpr(E.Sin(u) * 2.0)
    assert sexpr(e).startswith("(Product (Sin (Coefficient u))")


# ---------------------------------------------------------------------------
# Gateaux derivatives


def test_product_rule_symbolic(P1):
    w = Coefficient(P1, "w")
    h = E.Argument(P1, 0)
    d = gateaux_derivative(w * w, w, h)
    # d(w w)[h] = h w + w h
    assert d == E.Sum(E.Product(h, w), E.Product(w, h))


def test_det_derivative_at_identity(mesh, VP1):
    # w = x has grad w = I, so dDet[h = x] = tr(I) = 2 per unit area
    w = Function(VP1).interpolate(E.SpatialCoordinate(mesh))
    h = Function(VP1).interpolate(E.SpatialCoordinate(mesh))
    d = gateaux_derivative(E.Det(E.Grad(w)), w, h)
    assert assemble(d * dx) == pytest.approx(2.0, abs=1e-13)


def test_abs_derivative_at_zero_is_zero(mesh, P1):
    w = Function(P1)  # identically zero
    h = Function(P1).interpolate(lambda x, y: 1.0 + x)
    d = gateaux_derivative(E.Abs(w), w, h)
    assert assemble(d * dx) == 0.0


def test_derivative_wrt_absent_coefficient_is_zero(P1):
    u, w = Coefficient(P1, "u"), Coefficient(P1, "w")
    assert E.is_zero(gateaux_derivative(E.sin(u) * u, w, E.Argument(P1, 0)))


def test_direction_shape_checked(P1, VP1):
    w = Coefficient(P1, "w")
    with pytest.raises(ShapeMismatch):
        gateaux_derivative(w * w, w, E.Argument(VP1, 0))


def _random_fn(space, rng, scale=1.0):
    return Function(space, scale * rng.uniform(-1, 1, space.dim))


INTEGRANDS = {
    "grad_sq": lambda w: E.inner(E.grad(w), E.grad(w)),
    "cubic": lambda w: w**3 + 2.0 * w,
    "sin_cos": lambda w: E.sin(w) * E.cos(2.0 * w),
    "sqrt": lambda w: E.sqrt(1.5 + w * w),
    "quotient": lambda w: E.inner(E.grad(w), E.grad(w)) / (2.0 + w * w),
    "abs": lambda w: E.Abs(w + 3.0) * w,
}


@pytest.mark.parametrize("name", sorted(INTEGRANDS))
@given(seed=st.integers(0, 2**31 - 1))
def test_gateaux_matches_central_differences(P1, name, seed):
    rng = np.random.default_rng(seed)
    w = _random_fn(P1, rng)
    h = _random_fn(P1, rng)
    # same rule on both sides: the identity is exact only for a fixed quadrature
    meas = dx(degree=8)
    form = INTEGRANDS[name](w) * meas
    exact = assemble(gateaux_derivative(INTEGRANDS[name](w), w, h) * meas)
    eps = 1e-6
    base = w.dat.copy()
    w.dat[:] = base + eps * h.dat
    jp = assemble(form)
    w.dat[:] = base - eps * h.dat
    jm = assemble(form)
    w.dat[:] = base
    fd = (jp - jm) / (2 * eps)
    assert abs(exact - fd) <= 1e-6 * max(1.0, abs(fd))


def test_gradient_square_derivative_matches_formula(P1):
    rng = np.random.default_rng(0)
    w, h = _random_fn(P1, rng), _random_fn(P1, rng)
    d = gateaux_derivative(E.inner(E.grad(w), E.grad(w)), w, h)
    ref = 2.0 * E.inner(E.grad(w), E.grad(h))
    assert assemble(d * dx) == pytest.approx(assemble(ref * dx), rel=1e-13)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_gateaux_is_linear_in_direction(P1, a, b, seed):
    rng = np.random.default_rng(seed)
    w, h1, h2 = (_random_fn(P1, rng) for _ in range(3))
    comb = Function(P1, a * h1.dat + b * h2.dat)
    e = E.sin(w) * E.inner(E.grad(w), E.grad(w))
    lhs = assemble(gateaux_derivative(e, w, comb) * dx)
    rhs = a * assemble(gateaux_derivative(e, w, h1) * dx) + b * assemble(gateaux_derivative(e, w, h2) * dx)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@given(seed=st.integers(0, 1000))
def test_second_derivatives_commute(P1, seed):
    rng = np.random.default_rng(seed)
    w, h1, h2 = (_random_fn(P1, rng) for _ in range(3))
    e = E.cos(w) * E.inner(E.grad(w), E.grad(w)) + w**4
    d12 = assemble(gateaux_derivative(gateaux_derivative(e, w, h1), w, h2) * dx)
    d21 = assemble(gateaux_derivative(gateaux_derivative(e, w, h2), w, h1) * dx)
    assert abs(d12 - d21) <= 1e-10 * max(1.0, abs(d12))


# ---------------------------------------------------------------------------
# replace


def test_replace_examples(P1):
    u, v, f, uh = (Coefficient(P1, n) for n in "u v f uh".split())
    assert replace(u + v, {u: f}) == f + v
    assert replace(E.grad(u), {u: uh}) == E.grad(uh)
    e = E.sin(v) * 2.0
    assert replace(e, {u: f}) == e


def test_replace_shape_checked(P1, VP1):
    with pytest.raises(ShapeMismatch):
        replace(Coefficient(P1, "u"), {Coefficient(P1, "u"): Coefficient(VP1, "V")})


@given(order=st.permutations([0, 1]))
def test_disjoint_replacements_commute(P1, order):
    a, b, c, d = (Coefficient(P1, n) for n in "abcd")
    e = E.sin(a) * E.inner(E.grad(b), E.grad(a)) + b
    maps = [{a: c * 2.0}, {b: d + 1.0}]
    out1 = replace(replace(e, maps[order[0]]), maps[order[1]])
    out2 = replace(replace(e, maps[1]), maps[0])
    assert out1 == out2


def test_prune_zeros(P1):
    u = Coefficient(P1, "u")
    z = E.Zero()
    assert prune_zeros(E.Sum(u, z)) == u
    assert E.is_zero(prune_zeros(E.Product(z, u)))


# ---------------------------------------------------------------------------
# quadrature degree estimation


def test_degree_examples(mesh):
    u1 = Coefficient(FunctionSpace(mesh, 1), "u1")
    u2 = Coefficient(FunctionSpace(mesh, 2), "u2")
    x = E.SpatialCoordinate(mesh)
    assert estimate_quadrature_degree(E.inner(E.grad(u1), E.grad(u1))) == 1
    assert estimate_quadrature_degree(u2 * u2) == 4
    assert estimate_quadrature_degree(E.sin(x[0]) * u1) == 4
    assert estimate_quadrature_degree(u1**3) == 3
    assert estimate_quadrature_degree(u2 ** 20) == 20


def test_transcendental_bump_is_sufficient():
    mesh = unit_square_mesh(4)
    u = Function(FunctionSpace(mesh, 1)).interpolate(lambda x, y: 1.0 + x * y)
    x = E.SpatialCoordinate(mesh)
    integrand = E.sin(x[0]) * u
    base = assemble(integrand * dx)
    higher = assemble(integrand * dx(degree=estimate_quadrature_degree(integrand) + 2))
    assert abs(base - higher) < 1e-10
