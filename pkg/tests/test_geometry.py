import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shapediff import (
    Function,
    FunctionSpace,
    Mesh,
    VectorFunctionSpace,
    assemble,
    cell_map_jacobian,
    move_mesh,
    unit_square_mesh,
    validate_mesh,
)
from shapediff.errors import InvertedCell, MeshFormatError
from shapediff.geometry import LagrangeBasis, ReferenceTriangle, annulus_sector_mesh, rectangle_mesh
from shapediff.symlang import dx


def _ref_points(rng, n):
    p = rng.uniform(0, 1, (n, 2))
    flip = p.sum(axis=1) > 1
    p[flip] = 1 - p[flip]
    return p


def test_reference_normals():
    n = ReferenceTriangle.facet_normals
    assert np.allclose(n[0], np.array([1, 1]) / math.sqrt(2))
    assert np.allclose(n[1], [-1, 0]) and np.allclose(n[2], [0, -1])
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)


def test_p1_tabulation():
    vals, grads = LagrangeBasis(1).tabulate([[1 / 3, 1 / 3]])
    assert np.allclose(vals, 1 / 3)
    assert np.array_equal(grads[0], [[-1, -1], [1, 0], [0, 1]])


@pytest.mark.parametrize("degree", [1, 2])
def test_kronecker_property(degree):
    b = LagrangeBasis(degree)
    vals, _ = b.tabulate(b.nodes)
    assert np.allclose(vals, np.eye(b.ndofs), atol=1e-15)


@pytest.mark.parametrize("degree", [1, 2])
def test_partition_of_unity(degree):
    pts = _ref_points(np.random.default_rng(1), 100)
    vals, grads = LagrangeBasis(degree).tabulate(pts)
    assert np.max(np.abs(vals.sum(axis=1) - 1)) <= 1e-14
    assert np.max(np.abs(grads.sum(axis=1))) <= 1e-13


def test_p2_gradients_match_differences():
    b = LagrangeBasis(2)
    p = np.array([[0.2, 0.3]])
    _, g = b.tabulate(p)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (b.tabulate(p + e)[0] - b.tabulate(p - e)[0]) / (2 * h)
        assert np.allclose(fd[0], g[0, :, k], atol=1e-8)


def test_cell_map_jacobian():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    J, d = cell_map_jacobian(m, 0)
    assert np.allclose(J, np.eye(2)) and d == 1.0
    m2 = Mesh([[0, 0], [2, 0], [0, 2]], [[0, 1, 2]])
    assert cell_map_jacobian(m2, 0)[1] == 4.0
    cw = Mesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])
    with pytest.raises(InvertedCell):
        cell_map_jacobian(cw, 0)


def test_mesh_topology_unit_square():
    m = unit_square_mesh(4)
    assert (m.num_vertices, m.num_cells, m.num_facets) == (25, 32, 16)
    assert m.markers == [1, 2, 3, 4]
    for mk in range(1, 5):
        assert len(m.boundary_facets(mk)) == 4


def test_marked_interior_edge_rejected():
    with pytest.raises(MeshFormatError):
        Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], [(0, 2, 7)])


def test_coordinates_alias_vertices():
    m = unit_square_mesh(2)
    m.coordinates.dat[0] = 5.0
    assert m.vertices[0, 0] == 5.0
    m.vertices[1, 1] = -1.0
    assert m.coordinates.dat[3] == -1.0


def test_move_mesh_examples():
    m = unit_square_mesh(4)
    before = m.vertices.copy()
    V = Function(m.coordinates.space).interpolate(lambda x, y: np.stack([np.ones_like(x), 0 * y]))
    move_mesh(m, V, 0.0)
    assert np.array_equal(m.vertices, before)
    dets = m.determinants().copy()
    move_mesh(m, V, 1.0)
    assert np.allclose(m.vertices[:, 0], before[:, 0] + 1) and np.array_equal(m.vertices[:, 1], before[:, 1])
    assert np.allclose(m.determinants(), dets, rtol=1e-15)

    m = unit_square_mesh(4)
    X = m.coordinates.copy()
    move_mesh(m, X, 1.0)
    assert assemble(1.0 * dx(domain=m)) == pytest.approx(4.0, abs=1e-13)


@given(seed=st.integers(0, 10_000), scale=st.floats(1e-8, 10.0), repeats=st.integers(1, 3))
def test_move_and_reverse_is_bit_exact(seed, scale, repeats):
    m = unit_square_mesh(3)
    rng = np.random.default_rng(seed)
    before = m.vertices.copy()
    Vs = [Function(m.coordinates.space, rng.uniform(-1, 1, m.coordinates.space.dim)) for _ in range(repeats)]
    for V in Vs:
        move_mesh(m, V, scale)
    for V in reversed(Vs):
        move_mesh(m, V, -scale)
    assert np.array_equal(m.vertices, before)


def test_validate_mesh():
    m = unit_square_mesh(4)
    assert validate_mesh(m) == pytest.approx(1 / 16, rel=1e-14)
    V = Function(m.coordinates.space, np.random.default_rng(0).uniform(-1, 1, 50))
    move_mesh(m, V, 1e-6)
    assert validate_mesh(m) > 0
    m = unit_square_mesh(2)
    m.vertices[4] = m.vertices[0]  # collapse the centre onto a corner
    assert validate_mesh(m) <= 0


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("mesh_fn", [lambda: unit_square_mesh(3), lambda: annulus_sector_mesh(3, 5)])
def test_interpolation_reproduces_polynomials(degree, mesh_fn):
    m = mesh_fn()
    poly = (lambda x, y: 1 + 2 * x - y) if degree == 1 else (lambda x, y: 1 + x * y - 3 * y**2 + x)
    f = Function(FunctionSpace(m, degree)).interpolate(poly)
    rng = np.random.default_rng(3)
    cells = rng.integers(0, m.num_cells, 10)
    ref = _ref_points(rng, 10)
    x = m.vertices[m.cells[cells]]
    pts = x[:, 0] + np.einsum("pij,pj->pi", np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2), ref)
    assert np.max(np.abs(f.at(pts) - poly(pts[:, 0], pts[:, 1]))) <= 1e-12


def test_p2_shares_edge_dofs():
    m = unit_square_mesh(2)
    V2 = FunctionSpace(m, 2)
    assert V2.dim == m.num_vertices + len(m.edges)
    # each interior edge node appears in exactly two cells
    counts = np.bincount(V2.cell_nodes[:, 3:].ravel(), minlength=V2.num_nodes)
    assert set(counts[m.num_vertices :]) <= {1, 2}


def test_vector_dofs_are_interleaved():
    m = unit_square_mesh(1)
    W = VectorFunctionSpace(m, 1)
    assert W.dim == 8
    assert list(W.dofmap[0]) == [0, 1, 2, 3, 6, 7]  # vertices 0, 1, 3


def test_rectangle_and_annulus_are_valid():
    assert validate_mesh(rectangle_mesh(4, 2, 3.0, 0.5)) > 0
    m = annulus_sector_mesh(4, 8)
    assert validate_mesh(m) > 0
    area = assemble(1.0 * dx(domain=m))
    exact = 0.25 * math.pi * (1.0 - 0.25)
    assert area == pytest.approx(exact, rel=2e-2)
