"""Mesh input (Gmsh MSH 2.2 ASCII, JSON) and legacy VTK / CSV output."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from shapediff.errors import MeshFormatError
from shapediff.geometry import Mesh

_LINE, _TRIANGLE, _POINT = 1, 2, 15


def _sections(lines):
    """Map section name -> list of body lines."""
    out = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("$") or line.startswith("$End"):
            raise MeshFormatError(f"line {i + 1}: expected a section header, got {line!r}")
        name = line[1:]
        end = f"$End{name}"
        j = i + 1
        while j < len(lines) and lines[j].strip() != end:
            j += 1
        if j == len(lines):
            raise MeshFormatError(f"section ${name} is not terminated by {end}")
        out[name] = [ln.split() for ln in lines[i + 1 : j] if ln.strip()]
        i = j + 1
    return out


def _count(body, name):
    try:
        n = int(body[0][0])
    except (IndexError, ValueError):
        raise MeshFormatError(f"section ${name} lacks an entry count") from None
    if len(body) - 1 != n:
        raise MeshFormatError(f"section ${name} declares {n} entries but has {len(body) - 1}")
    return body[1:]


def read_msh(path):
    """Read the ASCII MSH 2.2 subset: lines (physical tag = boundary marker) and triangles."""
    text = Path(path).read_text()
    sec = _sections(text.splitlines())
    for name in ("MeshFormat", "Nodes", "Elements"):
        if name not in sec:
            raise MeshFormatError(f"missing section ${name}")
    fmt = sec["MeshFormat"]
    if not fmt or not fmt[0] or not fmt[0][0].startswith("2"):
        raise MeshFormatError(f"unsupported MSH version {fmt[0][0] if fmt and fmt[0] else '?'}; need 2.2")
    if len(fmt[0]) > 1 and fmt[0][1] != "0":
        raise MeshFormatError("binary MSH files are not supported")

    index = {}
    coords = []
    for row in _count(sec["Nodes"], "Nodes"):
        if len(row) != 4:
            raise MeshFormatError(f"malformed node line {' '.join(row)!r}")
        tag, x, y, z = int(row[0]), float(row[1]), float(row[2]), float(row[3])
        if z != 0.0:
            raise MeshFormatError(f"node {tag} has non-zero z coordinate {z}")
        index[tag] = len(coords)
        coords.append((x, y))

    cells, facets = [], []
    for row in _count(sec["Elements"], "Elements"):
        try:
            vals = [int(v) for v in row]
            etype, ntags = vals[1], vals[2]
            tags, nodes = vals[3 : 3 + ntags], vals[3 + ntags :]
        except (ValueError, IndexError):
            raise MeshFormatError(f"malformed element line {' '.join(row)!r}") from None
        expected = {_LINE: 2, _TRIANGLE: 3, _POINT: 1}.get(etype)
        if expected is None:
            raise MeshFormatError(f"unsupported element type {etype} (only 1=line, 2=triangle)")
        if len(nodes) != expected:
            raise MeshFormatError(f"element {vals[0]} of type {etype} has {len(nodes)} nodes")
        try:
            nodes = [index[n] for n in nodes]
        except KeyError as exc:
            raise MeshFormatError(f"element {vals[0]} references unknown node {exc.args[0]}") from None
        if etype == _TRIANGLE:
            cells.append(nodes)
        elif etype == _LINE:
            marker = tags[0] if tags else 0
            facets.append((nodes[0], nodes[1], marker))
    if not cells:
        raise MeshFormatError("mesh contains no triangles")
    return Mesh(np.array(coords), _orient(np.array(coords), np.array(cells)), facets)


def _orient(coords, cells):
    """Swap two vertices of clockwise triangles."""
    cells = cells.copy()
    a, b, c = coords[cells[:, 0]], coords[cells[:, 1]], coords[cells[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    cw = det < 0
    cells[cw, 1], cells[cw, 2] = cells[cw, 2], cells[cw, 1].copy()
    return cells


def read_json_mesh(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"invalid JSON mesh: {exc}") from None
    for key in ("vertices", "cells"):
        if key not in data:
            raise MeshFormatError(f"JSON mesh lacks {key!r}")
    return Mesh(data["vertices"], data["cells"], data.get("facets", []))


def mesh_to_json(mesh):
    facets = [
        [int(mesh.edges[e, 0]), int(mesh.edges[e, 1]), int(m)]
        for e, m in zip(mesh.facet_edges, mesh.facet_markers)
    ]
    return {
        "vertices": mesh.vertices.tolist(),
        "cells": mesh.cells.tolist(),
        "facets": facets,
    }


def write_json_mesh(path, mesh):
    Path(path).write_text(json.dumps(mesh_to_json(mesh)))


def read_mesh(path):
    """Dispatch on the file extension (``.msh`` or ``.json``)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file {path} does not exist")
    suffix = path.suffix.lower()
    if suffix == ".msh":
        return read_msh(path)
    if suffix == ".json":
        return read_json_mesh(path)
    raise MeshFormatError(f"unknown mesh format {suffix!r}; expected .msh or .json")


def _vertex_values(f):
    """Values of ``f`` at mesh vertices, shape ``(N,)`` or ``(N, 2)``."""
    vals = f.nodal_values()
    return vals[: f.space.mesh.num_vertices]


def write_vtk(path, mesh, fields=None):
    """Legacy ASCII VTK unstructured grid with point data.

    ``fields`` maps names to Functions; P2 fields are sampled at the vertices.
    """
    fields = fields or {}
    lines = ["# vtk DataFile Version 3.0", "shapediff output", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.num_vertices} double")
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    nc = mesh.num_cells
    lines.append(f"CELLS {nc} {4 * nc}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += ["5"] * nc
    if fields:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, f in fields.items():
            if f.space.mesh is not mesh:
                raise ValueError(f"field {name!r} lives on a different mesh")
            vals = _vertex_values(f)
            if vals.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in vals]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.17g} {b:.17g} 0" for a, b in vals]
    Path(path).write_text("\n".join(lines) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if np.ndim(row) == 0:
                row = [row]
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


__all__ = [
    "mesh_to_json",
    "read_json_mesh",
    "read_mesh",
    "read_msh",
    "write_csv",
    "write_json_mesh",
    "write_vtk",
]
