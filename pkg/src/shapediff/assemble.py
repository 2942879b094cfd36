"""Quadrature-based assembly of pulled-back forms, and Dirichlet conditions.

Integrands are interpreted directly: every node evaluates to an array of
shape ``(cells, points, test dofs, trial dofs) + value_shape`` where any of
the four leading axes may be 1 and broadcast. Rank-0 forms assemble to a
float, rank-1 to a dense vector and rank-2 to a CSR matrix.
"""

from __future__ import annotations

import dataclasses
import numbers

import numpy as np
import scipy.sparse as sp

from shapediff.errors import BoundaryMarkerError, UnsupportedNode
from shapediff.geometry import ReferenceTriangle, check_cells
from shapediff.pullback import pull_back, pull_back_expression
from shapediff.quadrature import quadrature
from shapediff.symlang import expr as E
from shapediff.symlang.form import CELL, EXTERIOR_FACET, Form, IntegralTerm

_LEAD = 4
_DEGREE_OVERRIDE = None


def set_quadrature_degree(degree):
    """Force a quadrature degree for every subsequent assembly (``None`` restores estimation)."""
    global _DEGREE_OVERRIDE
    if degree is not None:
        quadrature("triangle", int(degree))  # validates the range
        degree = int(degree)
    _DEGREE_OVERRIDE = degree


def _vector_table(vals):
    """Expand scalar basis values ``(Q, n, ...)`` to interleaved vector form ``(Q, 2n, 2, ...)``."""
    q, n = vals.shape[:2]
    rest = vals.shape[2:]
    out = np.zeros((q, 2 * n, 2) + rest)
    for c in range(2):
        out[:, c::2, c] = vals
    return out


class _Evaluator:
    def __init__(self, cells, points, normals=None):
        self.cells = cells
        self.points = points
        self.normals = normals
        self._tables = {}
        self.cache = {}

    def table(self, basis):
        key = basis.degree
        if key not in self._tables:
            self._tables[key] = basis.tabulate(self.points)
        return self._tables[key]

    def __call__(self, expr):
        cache = self.cache
        for node in E.unique_nodes(expr):
            if node not in cache:
                cache[node] = self._eval(node, [cache[o] for o in node.operands])
        return cache[expr]

    # leaf evaluation -------------------------------------------------------
    def _reference_value(self, t, grad):
        space = t.space
        vals, grads = self.table(space.basis)
        tab = grads if grad else vals
        vector = space.ncomp == 2
        if isinstance(t, E.Argument):
            if vector:
                tab = _vector_table(tab)
            q, n = tab.shape[:2]
            vshape = tab.shape[2:]
            shape = [1, q, 1, 1]
            shape[2 + t.number] = n
            if t.number not in (0, 1):
                raise UnsupportedNode("only arguments numbered 0 and 1 can be assembled")
            return tab.reshape(shape + list(vshape))
        local = t.dat[space.dofmap[self.cells]]
        if vector:
            local = local.reshape(len(self.cells), -1, 2)
            out = np.einsum("cnk,qn...->cqk...", local, tab)
        else:
            out = np.einsum("cn,qn...->cq...", local, tab)
        return out.reshape(out.shape[:2] + (1, 1) + out.shape[2:])

    def _eval(self, node, ops):
        if isinstance(node, E.Zero):
            return np.zeros((1,) * _LEAD + node.shape)
        if isinstance(node, E.Constant):
            return node.value.reshape((1,) * _LEAD + node.shape)
        if isinstance(node, E.ReferenceNormal):
            if self.normals is None:
                raise UnsupportedNode("reference normal outside a facet integral")
            return self.normals.reshape(len(self.normals), 1, 1, 1, 2)
        if isinstance(node, E.ReferenceValue):
            return self._reference_value(node.operands[0], grad=False)
        if isinstance(node, E.ReferenceGrad):
            return self._reference_value(node.operands[0].operands[0], grad=True)
        if isinstance(node, E.FormArgument):
            return None  # only reachable through ReferenceValue
        if isinstance(node, E.Terminal) or isinstance(node, (E.Grad, E.Div)):
            raise UnsupportedNode(f"{type(node).__name__} must be pulled back before evaluation")
        return _apply(node, ops)


def _expand(a, extra):
    return a.reshape(a.shape + (1,) * extra)


def _apply(node, ops):
    if isinstance(node, E.Sum):
        return ops[0] + ops[1]
    if isinstance(node, E.Product):
        a, b = ops
        na = node.operands[0].rank
        nb = node.operands[1].rank
        return _expand(a, nb - na if nb > na else 0) * _expand(b, na - nb if na > nb else 0)
    if isinstance(node, E.Division):
        a, b = ops
        return a / _expand(b, node.operands[0].rank)
    if isinstance(node, E.Power):
        return ops[0] ** node.exponent
    if isinstance(node, E.Inner):
        a, b = ops
        r = node.operands[0].rank
        return (a * b).sum(axis=tuple(range(-r, 0))) if r else a * b
    if isinstance(node, E.Dot):
        a, b = ops
        ra, rb = node.operands[0].rank, node.operands[1].rank
        if ra == 1 and rb == 1:
            return (a * b).sum(axis=-1)
        if ra == 2 and rb == 1:
            return np.matmul(a, b[..., None])[..., 0]
        if ra == 1 and rb == 2:
            return np.matmul(a[..., None, :], b)[..., 0, :]
        return np.matmul(a, b)
    if isinstance(node, E.Outer):
        a, b = ops
        return a[..., :, None] * b[..., None, :]
    if isinstance(node, E.Transpose):
        return np.swapaxes(ops[0], -1, -2)
    if isinstance(node, E.Trace):
        a = ops[0]
        return a[..., 0, 0] + a[..., 1, 1]
    if isinstance(node, E.Det):
        a = ops[0]
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if isinstance(node, E.Inverse):
        a = ops[0]
        d = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        out = np.empty(a.shape)
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
        return out / d[..., None, None]
    if isinstance(node, E.Abs):
        return np.abs(ops[0])
    if isinstance(node, E.Sign):
        return np.sign(ops[0])
    if isinstance(node, E.Sqrt):
        return np.sqrt(ops[0])
    if isinstance(node, E.Sin):
        return np.sin(ops[0])
    if isinstance(node, E.Cos):
        return np.cos(ops[0])
    if isinstance(node, E.Indexed):
        tail = (slice(None),) * node.rank
        return ops[0][(Ellipsis,) + node.index + tail]
    if isinstance(node, E.ListTensor):
        a, b = np.broadcast_arrays(*ops)
        return np.stack([a, b], axis=_LEAD)
    raise UnsupportedNode(f"cannot evaluate {type(node).__name__}")


# ---------------------------------------------------------------------------
# local integration


def _term_pieces(term, arguments):
    """Yield ``(cells, local_tensor)`` for one reference term."""
    mesh = term.domain
    if term.measure == CELL:
        if term.subdomain is not None:
            raise BoundaryMarkerError("cell subdomains are not supported: meshes carry no cell markers")
        rule = quadrature("triangle", term.degree)
        cells = np.arange(mesh.num_cells)
        ev = _Evaluator(cells, rule.points)
        yield cells, _integrate(ev(term.integrand), rule.weights, len(cells), arguments)
        return
    rule = quadrature("interval", term.degree)
    if term.subdomain is None:
        selected = np.ones(mesh.num_facets, dtype=bool)
    else:
        if term.subdomain not in mesh.markers:
            raise BoundaryMarkerError(f"boundary marker {term.subdomain} does not exist on the mesh")
        selected = mesh.facet_markers == term.subdomain
    for local in range(3):
        idx = np.flatnonzero(selected & (mesh.facet_local == local))
        if not len(idx):
            continue
        cells = mesh.facet_cells[idx]
        pts = ReferenceTriangle.facet_points(local, rule.points)
        weights = rule.weights * ReferenceTriangle.facet_lengths[local]
        normals = np.broadcast_to(ReferenceTriangle.facet_normals[local], (len(cells), 2))
        ev = _Evaluator(cells, pts, normals)
        yield cells, _integrate(ev(term.integrand), weights, len(cells), arguments)


def _integrate(values, weights, ncells, arguments):
    dims = [ncells, len(weights)]
    for k in range(2):
        dims.append(arguments[k].space.local_dim if k < len(arguments) else 1)
    values = np.broadcast_to(values, tuple(dims))
    return np.einsum("cqab,q->cab", values, weights)


def _as_form(obj):
    if isinstance(obj, Form):
        return obj
    if isinstance(obj, IntegralTerm):
        return Form([obj])
    raise TypeError(f"cannot assemble {type(obj).__name__}")


def assemble(form, bcs=(), degree=None):
    """Assemble a form (or a single integral term).

    ``degree`` overrides the quadrature degree of every physical term. With
    Dirichlet conditions, rank-2 tensors get zeroed constrained rows and
    columns with a unit diagonal; rank-1 tensors get zero constrained entries.
    """
    form = _as_form(form)
    if degree is None:
        degree = _DEGREE_OVERRIDE
    if degree is not None:
        form = Form(dataclasses.replace(t, degree=int(degree)) if t.reference else t for t in form.terms)
    if isinstance(bcs, DirichletBC):
        bcs = [bcs]
    arguments = form.arguments()
    numbers_ = [a.number for a in arguments]
    if numbers_ != list(range(len(numbers_))) or len(numbers_) > 2:
        raise ValueError(f"form arguments must be numbered 0..rank-1 (rank <= 2), got {numbers_}")
    rank = len(arguments)
    mesh = form.domain
    if mesh is None:
        return 0.0 if rank == 0 else None
    check_cells(mesh)

    if rank == 0:
        total = 0.0
        for term in form.terms:
            ri = pull_back(term, degree) if not term.reference else term
            for _, local in _term_pieces(ri, arguments):
                total += float(local.sum())
        return total

    test_space = arguments[0].space
    if rank == 1:
        vec = np.zeros(test_space.dim)
        for term in form.terms:
            ri = pull_back(term, degree) if not term.reference else term
            for cells, local in _term_pieces(ri, arguments):
                dm = test_space.dofmap[cells]
                vec += np.bincount(dm.ravel(), weights=local[:, :, 0].ravel(), minlength=test_space.dim)
        for bc in bcs:
            vec[bc.dofs] = 0.0
        return vec

    trial_space = arguments[1].space
    rows, cols, data = [], [], []
    for term in form.terms:
        ri = pull_back(term, degree) if not term.reference else term
        for cells, local in _term_pieces(ri, arguments):
            r = test_space.dofmap[cells]
            c = trial_space.dofmap[cells]
            rows.append(np.repeat(r[:, :, None], c.shape[1], axis=2).ravel())
            cols.append(np.repeat(c[:, None, :], r.shape[1], axis=1).ravel())
            data.append(local.ravel())
    shape = (test_space.dim, trial_space.dim)
    if data:
        mat = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        ).tocsr()
    else:
        mat = sp.csr_matrix(shape)
    mat.sum_duplicates()
    if bcs:
        mat = _apply_bcs_matrix(mat, bcs, test_space, trial_space)
    return mat


def _apply_bcs_matrix(mat, bcs, test_space, trial_space):
    row_mask = np.ones(test_space.dim)
    col_mask = np.ones(trial_space.dim)
    for bc in bcs:
        if bc.space is test_space:
            row_mask[bc.dofs] = 0.0
        if bc.space is trial_space:
            col_mask[bc.dofs] = 0.0
    mat = (sp.diags(row_mask) @ mat @ sp.diags(col_mask)).tocsr()
    if test_space is trial_space:
        mat = (mat + sp.diags(1.0 - row_mask)).tocsr()
    return mat


# ---------------------------------------------------------------------------
# interpolation and boundary conditions


def interpolate_expression(source, space):
    """Nodal values ``(num_nodes,) + value_shape`` of an expression in ``x``."""
    expr = E.as_expr(source)
    if expr is NotImplemented:
        raise TypeError(f"cannot interpolate {type(source).__name__}")
    if expr.shape != space.value_shape:
        raise E.ShapeMismatch(
            f"cannot interpolate a {expr.shape}-valued expression into a {space.value_shape} space"
        )
    if E.extract_arguments(expr):
        raise ValueError("cannot interpolate an expression containing Arguments")
    mesh = space.mesh
    ref = pull_back_expression(expr, mesh)
    cells = np.arange(mesh.num_cells)
    ev = _Evaluator(cells, space.basis.nodes)
    vals = np.broadcast_to(ev(ref), (len(cells), space.basis.ndofs, 1, 1) + expr.shape)[:, :, 0, 0]
    out = np.empty((space.num_nodes,) + expr.shape)
    out[space.cell_nodes.ravel()] = vals.reshape((-1,) + expr.shape)
    return out


class DirichletBC:
    """Prescribed values on the boundary facets carrying ``markers``."""

    def __init__(self, space, value, markers):
        if isinstance(markers, numbers.Integral):
            markers = [int(markers)]
        self.space = space
        self.value = value
        self.markers = tuple(int(m) for m in markers)
        missing = [m for m in self.markers if m not in space.mesh.markers]
        if missing:
            raise BoundaryMarkerError(f"boundary marker(s) {missing} not present in the mesh")
        self.dofs = space.boundary_dofs(self.markers)

    def values(self):
        """Target values at the constrained DOFs."""
        from shapediff.geometry import Function

        v = self.value
        if isinstance(v, numbers.Real) and v == 0:
            return np.zeros(len(self.dofs))
        tmp = Function(self.space).interpolate(v)
        return tmp.dat[self.dofs]

    def apply(self, function):
        apply_bc_to_function(function, self)

    def homogenize(self):
        return DirichletBC(self.space, 0.0, self.markers)

    def __repr__(self):
        return f"DirichletBC({self.space!r}, markers={self.markers})"


def apply_bc_to_function(f, bc):
    """Set the constrained DOFs of ``f`` to the interpolated boundary values."""
    if f.space is not bc.space:
        raise ValueError("boundary condition and function live on different spaces")
    f.dat[bc.dofs] = bc.values()


def homogenize(bcs):
    return [bc.homogenize() for bc in bcs]
