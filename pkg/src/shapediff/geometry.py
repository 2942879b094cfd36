"""Reference triangle, Lagrange bases, meshes and function spaces.

The mesh geometry is itself a vector P1 :class:`Function` (``mesh.coordinates``)
whose DOF array *is* the vertex array, so moving a mesh and changing a
coefficient are the same operation. Vector DOFs are interleaved:
``(x0, y0, x1, y1, ...)``.
"""

from __future__ import annotations

import math

import numpy as np

from shapediff.errors import InvertedCell, MeshFormatError
from shapediff.symlang.expr import Coefficient

DET_TOL = 1e-14


class ReferenceTriangle:
    """Triangle (0,0), (1,0), (0,1). Facet ``m`` is the edge opposite vertex ``m``."""

    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    facet_vertices = ((1, 2), (2, 0), (0, 1))
    facet_normals = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    facet_normals[0] /= math.sqrt(2.0)
    facet_lengths = np.array([math.sqrt(2.0), 1.0, 1.0])
    area = 0.5

    @classmethod
    def facet_points(cls, facet, t):
        """Map interval parameters ``t`` in [0, 1] onto reference facet ``facet``."""
        a, b = cls.facet_vertices[facet]
        va, vb = cls.vertices[a], cls.vertices[b]
        t = np.asarray(t, dtype=float)
        return va[None, :] + t[:, None] * (vb - va)[None, :]


def _barycentric(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class LagrangeBasis:
    """Scalar Lagrange basis of degree 1 or 2 on the reference triangle.

    Node order: the three vertices, then (degree 2) the midpoint of the edge
    opposite each vertex.
    """

    def __init__(self, degree):
        if degree not in (1, 2):
            raise ValueError(f"only degree 1 and 2 Lagrange elements are supported, got {degree}")
        self.degree = degree
        verts = ReferenceTriangle.vertices
        if degree == 1:
            self.nodes = verts.copy()
        else:
            mids = [0.5 * (verts[a] + verts[b]) for a, b in ReferenceTriangle.facet_vertices]
            self.nodes = np.vstack([verts, mids])
        self.ndofs = len(self.nodes)

    def tabulate(self, pts):
        """Values ``(Q, n)`` and reference gradients ``(Q, n, 2)`` at ``pts``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lam = _barycentric(pts)
        q = len(pts)
        if self.degree == 1:
            return lam, np.broadcast_to(_BARY_GRADS, (q, 3, 2)).copy()
        vals = np.empty((q, 6))
        grads = np.empty((q, 6, 2))
        for i in range(3):
            vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grads[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * _BARY_GRADS[i]
        for m, (a, b) in enumerate(ReferenceTriangle.facet_vertices):
            vals[:, 3 + m] = 4.0 * lam[:, a] * lam[:, b]
            grads[:, 3 + m, :] = 4.0 * (
                lam[:, b, None] * _BARY_GRADS[a] + lam[:, a, None] * _BARY_GRADS[b]
            )
        return vals, grads


_BASES = {1: LagrangeBasis(1), 2: LagrangeBasis(2)}


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


class Mesh:
    """Simplicial 2D mesh with boundary markers.

    ``facets`` lists marked boundary edges as ``(i, j, marker)``; boundary
    edges not listed get marker 0.
    """

    def __init__(self, vertices, cells, facets=()):
        coords = np.array(vertices, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise MeshFormatError(f"vertices must be an (N, 2) array, got shape {coords.shape}")
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        if cells.size and (cells.min() < 0 or cells.max() >= len(coords)):
            raise MeshFormatError("cell references a vertex that does not exist")
        self.cells = cells
        self.cells.setflags(write=False)
        self._coords = np.ascontiguousarray(coords)
        self._build_topology(facets)
        self._spaces = {}
        self._shadow = None
        self.coordinates = Function(
            self.function_space(1, vector=True), val=self._coords.reshape(-1), name="X"
        )

    # topology -------------------------------------------------------------
    def _build_topology(self, facets):
        edge_index = {}
        cell_edges = np.empty((len(self.cells), 3), dtype=np.int64)
        edge_cells = []
        for c, tri in enumerate(self.cells):
            for m, (a, b) in enumerate(ReferenceTriangle.facet_vertices):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                e = edge_index.get(key)
                if e is None:
                    e = edge_index[key] = len(edge_cells)
                    edge_cells.append([])
                edge_cells[e].append((c, m))
                cell_edges[c, m] = e
        self.edges = np.array(sorted(edge_index, key=edge_index.get), dtype=np.int64).reshape(-1, 2)
        self.cell_edges = cell_edges
        markers = {}
        for i, j, marker in facets:
            markers[(min(int(i), int(j)), max(int(i), int(j)))] = int(marker)
        fcell, flocal, fmark, fedge = [], [], [], []
        for e, adj in enumerate(edge_cells):
            if len(adj) == 1:
                c, m = adj[0]
                key = tuple(self.edges[e])
                fcell.append(c)
                flocal.append(m)
                fmark.append(markers.pop(key, 0))
                fedge.append(e)
            elif len(adj) > 2:
                raise MeshFormatError(f"edge {tuple(self.edges[e])} is shared by {len(adj)} cells")
        if markers:
            bad = sorted(markers)[0]
            raise MeshFormatError(f"marked facet {bad} is not a boundary edge of the mesh")
        self.facet_cells = np.array(fcell, dtype=np.int64)
        self.facet_local = np.array(flocal, dtype=np.int64)
        self.facet_markers = np.array(fmark, dtype=np.int64)
        self.facet_edges = np.array(fedge, dtype=np.int64)

    @property
    def vertices(self):
        return self._coords

    @property
    def num_vertices(self):
        return len(self._coords)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_facets(self):
        return len(self.facet_cells)

    @property
    def markers(self):
        return sorted(set(self.facet_markers.tolist()))

    def boundary_facets(self, marker=None):
        """Indices into the exterior facet arrays, optionally for one marker."""
        if marker is None:
            return np.arange(self.num_facets)
        return np.flatnonzero(self.facet_markers == marker)

    def function_space(self, degree=1, vector=False):
        key = (degree, bool(vector))
        if key not in self._spaces:
            self._spaces[key] = FunctionSpace._create(self, degree, bool(vector))
        return self._spaces[key]

    # geometry -------------------------------------------------------------
    def jacobians(self):
        """Cell Jacobians ``(C, 2, 2)`` with columns X1 - X0 and X2 - X0."""
        x = self._coords[self.cells]
        return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)

    def determinants(self):
        j = self.jacobians()
        return j[:, 0, 0] * j[:, 1, 1] - j[:, 0, 1] * j[:, 1, 0]

    def copy(self):
        facets = [
            (*self.edges[e], mk) for e, mk in zip(self.facet_edges, self.facet_markers) if mk != 0
        ]
        return Mesh(self._coords.copy(), self.cells.copy(), facets)

    def __repr__(self):
        return f"Mesh({self.num_vertices} vertices, {self.num_cells} cells, {self.num_facets} boundary facets)"


def cell_map_jacobian(mesh, cell):
    """``(DF, det DF)`` of the affine map onto ``cell``; raises InvertedCell if det <= 1e-14."""
    x = mesh.vertices[mesh.cells[cell]]
    basis = _BASES[1]
    _, grads = basis.tabulate(np.array([[1.0 / 3.0, 1.0 / 3.0]]))
    jac = np.einsum("mi,mj->ij", x, grads[0])
    d = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if d <= DET_TOL:
        raise InvertedCell(cell, d)
    return jac, d


def check_cells(mesh):
    dets = mesh.determinants()
    bad = np.flatnonzero(dets <= DET_TOL)
    if len(bad):
        raise InvertedCell(int(bad[0]), float(dets[bad[0]]))
    return dets


def validate_mesh(mesh):
    """Minimum Jacobian determinant over all cells."""
    return float(mesh.determinants().min())


def move_mesh(mesh, displacement, scale=1.0):
    """In place ``X <- X + scale * V``.

    Moves are accumulated with a compensated (double-double) sum so that a
    move followed by the opposite move restores the coordinates bit for bit.
    """
    dat = mesh.coordinates.dat
    step = scale * np.asarray(getattr(displacement, "dat", displacement), dtype=float)
    if step.shape != dat.shape:
        raise ValueError(f"displacement has {step.size} DOFs, coordinates have {dat.size}")
    shadow = mesh._shadow
    if shadow is None or not np.array_equal(shadow[2], dat):
        shadow = (dat.copy(), np.zeros_like(dat), None)
    hi, err = _two_sum(shadow[0], step)
    lo = shadow[1] + err
    dat[:] = hi + lo
    mesh._shadow = (hi, lo, dat.copy())


# ---------------------------------------------------------------------------
# structured mesh generators


def rectangle_mesh(nx, ny, lx=1.0, ly=1.0, origin=(0.0, 0.0)):
    """Right-diagonal triangulation; markers 1 left, 2 right, 3 bottom, 4 top."""
    xs = origin[0] + np.linspace(0.0, lx, nx + 1)
    ys = origin[1] + np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    facets = []
    for j in range(ny):
        facets.append((vid(0, j), vid(0, j + 1), 1))
        facets.append((vid(nx, j), vid(nx, j + 1), 2))
    for i in range(nx):
        facets.append((vid(i, 0), vid(i + 1, 0), 3))
        facets.append((vid(i, ny), vid(i + 1, ny), 4))
    return Mesh(verts, cells, facets)


def unit_square_mesh(n):
    return rectangle_mesh(n, n)


def annulus_sector_mesh(nr, nt, r_inner=0.5, r_outer=1.0, angle=0.5 * math.pi):
    """Polar image of a rectangle mesh; markers 1 inner arc, 2 outer arc, 3/4 the two rays."""
    rect = rectangle_mesh(nr, nt, r_outer - r_inner, angle, origin=(r_inner, 0.0))
    r, t = rect.vertices[:, 0], rect.vertices[:, 1]
    verts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    facets = [(*rect.edges[e], mk) for e, mk in zip(rect.facet_edges, rect.facet_markers)]
    return Mesh(verts, rect.cells, facets)


# ---------------------------------------------------------------------------
# function spaces


class FunctionSpace:
    """Continuous Lagrange space (degree 1 or 2, scalar or 2-vector) on a mesh.

    Obtain instances through ``FunctionSpace(mesh, degree, vector)``, which
    returns the mesh's cached space.
    """

    def __new__(cls, mesh, degree=1, vector=False):
        return mesh.function_space(degree, vector)

    @classmethod
    def _create(cls, mesh, degree, vector):
        self = object.__new__(cls)
        self.mesh = mesh
        self.degree = degree
        self.basis = _BASES[degree]
        self.value_shape = (2,) if vector else ()
        self.ncomp = 2 if vector else 1
        nv = mesh.num_vertices
        if degree == 1:
            self.cell_nodes = mesh.cells.copy()
            self.num_nodes = nv
        else:
            self.cell_nodes = np.hstack([mesh.cells, nv + mesh.cell_edges])
            self.num_nodes = nv + len(mesh.edges)
        if vector:
            dm = np.empty((mesh.num_cells, 2 * self.basis.ndofs), dtype=np.int64)
            dm[:, 0::2] = 2 * self.cell_nodes
            dm[:, 1::2] = 2 * self.cell_nodes + 1
            self.dofmap = dm
        else:
            self.dofmap = self.cell_nodes
        self.dofmap.setflags(write=False)
        self.dim = self.num_nodes * self.ncomp
        return self

    def __init__(self, *args, **kwargs):
        pass

    def __reduce__(self):
        return (FunctionSpace, (self.mesh, self.degree, bool(self.value_shape)))

    @property
    def local_dim(self):
        return self.dofmap.shape[1]

    def node_coordinates(self):
        """Physical coordinates of every node, ``(num_nodes, 2)``."""
        v = self.mesh.vertices
        if self.degree == 1:
            return v.copy()
        return np.vstack([v, 0.5 * (v[self.mesh.edges[:, 0]] + v[self.mesh.edges[:, 1]])])

    def boundary_nodes(self, markers):
        """Sorted node indices on facets carrying any of ``markers``."""
        mesh = self.mesh
        sel = np.isin(mesh.facet_markers, list(markers))
        edges = mesh.facet_edges[sel]
        nodes = set(mesh.edges[edges].ravel().tolist())
        if self.degree == 2:
            nodes.update((mesh.num_vertices + edges).tolist())
        return np.array(sorted(nodes), dtype=np.int64)

    def boundary_dofs(self, markers):
        nodes = self.boundary_nodes(markers)
        if self.ncomp == 1:
            return nodes
        return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))

    def __repr__(self):
        kind = "Vector" if self.value_shape else "Scalar"
        return f"{kind}P{self.degree}(dim={self.dim})"


def VectorFunctionSpace(mesh, degree=1):
    return FunctionSpace(mesh, degree, vector=True)


class Function(Coefficient):
    """A coefficient with a flat DOF array ``dat`` (length = space dimension)."""

    def __init__(self, space, val=None, name=None):
        super().__init__(space, name=name)
        if val is None:
            val = np.zeros(space.dim)
        elif not isinstance(val, np.ndarray) or val.dtype != np.float64:
            val = np.array(val, dtype=float)
        if val.shape != (space.dim,):
            raise ValueError(f"expected {space.dim} DOF values, got shape {val.shape}")
        object.__setattr__(self, "dat", val)

    def __setattr__(self, name, value):
        if name == "dat" and "dat" in self.__dict__:
            # keep storage identity: the mesh coordinate field aliases the vertex array
            self.dat[:] = value
        else:
            super().__setattr__(name, value)

    @property
    def mesh(self):
        return self.space.mesh

    def assign(self, other):
        self.dat[:] = getattr(other, "dat", other)
        return self

    def copy(self, name=None):
        return Function(self.space, self.dat.copy(), name=name)

    def nodal_values(self):
        """``(num_nodes,)`` or ``(num_nodes, 2)`` view of the DOFs."""
        if self.space.ncomp == 1:
            return self.dat
        return self.dat.reshape(-1, 2)

    def interpolate(self, source):
        """Nodal interpolation of a callable ``f(x, y)`` or a symbolic expression."""
        from shapediff.symlang.expr import Expr

        space = self.space
        if isinstance(source, Expr) or not callable(source):
            from shapediff.assemble import interpolate_expression

            vals = interpolate_expression(source, space)
        else:
            pts = space.node_coordinates()
            out = np.asarray(source(pts[:, 0], pts[:, 1]), dtype=float)
            if space.ncomp == 2:
                out = np.broadcast_to(out, (2, len(pts))).T
            vals = np.broadcast_to(out, (space.num_nodes,) + space.value_shape)
        self.dat[:] = np.reshape(vals, -1)
        return self

    def at(self, points):
        """Evaluate at physical points (each must lie in some cell)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mesh = self.space.mesh
        cells, ref = locate_points(mesh, points)
        vals, _ = self.space.basis.tabulate(ref)
        nodes = self.space.cell_nodes[cells]
        nv = self.nodal_values()
        if self.space.ncomp == 1:
            return np.einsum("pm,pm->p", vals, nv[nodes])
        return np.einsum("pm,pmk->pk", vals, nv[nodes])


def locate_points(mesh, points, tol=1e-12):
    """Containing cell and reference coordinates for each physical point."""
    jac = mesh.jacobians()
    kinv = np.linalg.inv(jac)
    x0 = mesh.vertices[mesh.cells[:, 0]]
    rel = points[:, None, :] - x0[None, :, :]
    ref = np.einsum("cij,pcj->pci", kinv, rel)
    lam = np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)
    inside = np.all(lam >= -tol, axis=2)
    if not np.all(inside.any(axis=1)):
        missing = np.flatnonzero(~inside.any(axis=1))[0]
        raise ValueError(f"point {points[missing].tolist()} is outside the mesh")
    cells = inside.argmax(axis=1)
    return cells, ref[np.arange(len(points)), cells]
