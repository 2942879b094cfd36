import json

import numpy as np
import pytest

from shapediff import Function, FunctionSpace, unit_square_mesh, validate_mesh
from shapediff.cli import main
from shapediff.errors import MeshFormatError
from shapediff.io import read_mesh, write_json_mesh, write_vtk


def test_read_two_triangle_msh(fixtures):
    m = read_mesh(fixtures / "square2.msh")
    assert (m.num_vertices, m.num_cells, m.num_facets) == (4, 2, 4)
    assert m.markers == [1, 2, 3, 4]
    assert validate_mesh(m) > 0


def test_quad_element_rejected(fixtures):
    with pytest.raises(MeshFormatError, match="element type 3"):
        read_mesh(fixtures / "quad.msh")


def test_nonzero_z_rejected(fixtures):
    with pytest.raises(MeshFormatError, match="z"):
        read_mesh(fixtures / "nonplanar.msh")


@pytest.mark.parametrize(
    "text",
    [
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n",
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n2\n1 0 0 0\n$EndNodes\n$Elements\n0\n$EndElements\n",
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n",
        "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n$Nodes\n0\n$EndNodes\n$Elements\n0\n$EndElements\n",
    ],
)
def test_malformed_msh(tmp_path, text):
    p = tmp_path / "bad.msh"
    p.write_text(text)
    with pytest.raises(MeshFormatError):
        read_mesh(p)


def test_clockwise_triangles_reoriented(tmp_path, fixtures):
    text = (fixtures / "square2.msh").read_text().replace("5 2 2 0 1 1 2 3", "5 2 2 0 1 1 3 2")
    p = tmp_path / "cw.msh"
    p.write_text(text)
    assert validate_mesh(read_mesh(p)) > 0


def test_json_round_trip(tmp_path, fixtures):
    m = unit_square_mesh(3)
    write_json_mesh(tmp_path / "m.json", m)
    m2 = read_mesh(tmp_path / "m.json")
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.cells, m2.cells)
    assert np.array_equal(m.facet_markers, m2.facet_markers)
    assert np.array_equal(m.facet_edges, m2.facet_edges)
    ch = read_mesh(fixtures / "channel.json")
    assert ch.markers == [1, 2, 3, 4] and ch.num_cells == 6


def test_unknown_extension(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("")
    with pytest.raises(MeshFormatError):
        read_mesh(p)


def _vtk_sections(path):
    return path.read_text().splitlines()


def test_vtk_geometry_only(tmp_path):
    m = unit_square_mesh(2)
    write_vtk(tmp_path / "g.vtk", m)
    lines = _vtk_sections(tmp_path / "g.vtk")
    assert lines[0].startswith("# vtk DataFile") and "DATASET UNSTRUCTURED_GRID" in lines
    assert "POINTS 9 double" in lines and "CELLS 8 32" in lines and "CELL_TYPES 8" in lines
    assert not any(ln.startswith("POINT_DATA") for ln in lines)


def test_vtk_scalar_and_vector_fields(tmp_path):
    m = unit_square_mesh(2)
    s = Function(FunctionSpace(m, 2)).interpolate(lambda x, y: x + y)
    v = Function(m.coordinates.space).interpolate(lambda x, y: np.stack([x, -y]))
    write_vtk(tmp_path / "f.vtk", m, {"s": s, "v": v})
    lines = _vtk_sections(tmp_path / "f.vtk")
    i = lines.index("POINT_DATA 9")
    assert lines[i + 1] == "SCALARS s double 1"
    scalars = [float(t) for t in lines[i + 3 : i + 12]]
    assert np.allclose(scalars, m.vertices.sum(axis=1))
    j = lines.index("VECTORS v double")
    vecs = [ln.split() for ln in lines[j + 1 : j + 10]]
    assert all(len(t) == 3 and float(t[2]) == 0 for t in vecs)


# ---------------------------------------------------------------------------
# command line


def test_run_example_1(tmp_path, capsys):
    assert main(["run-example", "1", "--n", "8", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "J = -0.333333333333333" in out
    rows = (tmp_path / "dJ_example1.csv").read_text().splitlines()
    assert rows[0] == "dJ" and len(rows) == 1 + 2 * 81


def test_taylor_cli(tmp_path, capsys):
    assert main(["taylor-test", "--example", "3", "--seed", "42", "--n", "8", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    s1 = float(out.split("slope(delta1) = ")[1].split()[0])
    s2 = float(out.split("slope(delta2) = ")[1].split()[0])
    assert s1 >= 1.9 and s2 >= 2.9
    assert (tmp_path / "taylor_example3.csv").read_text().startswith("s,J,delta1,delta2\n")


def test_optimize_missing_mesh_is_config_error(tmp_path):
    assert main(["optimize", "--mesh", str(tmp_path / "nope.msh"), "--out", str(tmp_path)]) == 2


def test_bad_flags_are_config_errors(tmp_path):
    assert main(["optimize", "--step-size", "-1", "--out", str(tmp_path)]) == 2
    assert main(["optimize", "--fixed", "9", "--n", "2", "--out", str(tmp_path)]) == 2
    assert main(["optimize", "--fixed", "a,b", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run-example", "7"])
    assert info.value.code == 2


def test_optimize_outputs(tmp_path):
    assert main(["optimize", "--n", "4", "--steps", "3", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "history.csv").read_text().splitlines()
    assert rows[0] == "iter,J,gradnorm,volume,step,penalized,rejected"
    assert len(rows) == 5
    assert len(list(tmp_path.glob("shape_*.vtk"))) == 4


def test_numerical_failure_exit_code(tmp_path):
    # a huge step repeatedly inverts cells until the step underflows
    assert main(["optimize", "--n", "4", "--steps", "1", "--step-size", "1e-9", "--out", str(tmp_path)]) == 0
    code = main(["optimize", "--mesh", str(_inverted_mesh(tmp_path)), "--steps", "1", "--out", str(tmp_path)])
    assert code == 3


def _inverted_mesh(tmp_path):
    m = unit_square_mesh(2)
    data = {
        "vertices": m.vertices.tolist(),
        "cells": m.cells.tolist(),
        "facets": [[int(a), int(b), int(k)] for (a, b), k in zip(m.edges[m.facet_edges], m.facet_markers)],
    }
    data["vertices"][4] = [2.0, 2.0]  # centre vertex pushed outside: inverted cells
    p = tmp_path / "inv.json"
    p.write_text(json.dumps(data))
    return p


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 4, "steps": 1, "alpha": 0.0, "fixed": [3, 4], "vtk": False}))
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert not list(tmp_path.glob("*.vtk"))
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["optimize", "--config", str(cfg)]) == 2


def test_mesh_info(fixtures, capsys):
    assert main(["mesh-info", "--mesh", str(fixtures / "square2.msh")]) == 0
    out = capsys.readouterr().out
    assert "vertices: 4" in out and "cells: 2" in out and "boundary facets: 4" in out
    assert "min det: 1.000000e+00" in out


@pytest.mark.parametrize(
    "argv,files",
    [
        (["run-example", "2", "--n", "4"], ["dJ_example2.csv"]),
        (["taylor-test", "--example", "1", "--n", "4", "--seed", "7"], ["taylor_example1.csv"]),
        (["optimize", "--n", "4", "--steps", "3", "--no-vtk"], ["history.csv"]),
    ],
)
def test_cli_outputs_are_byte_identical(tmp_path, argv, files):
    for run in ("a", "b"):
        assert main(argv + ["--threads", "1", "--out", str(tmp_path / run)]) == 0
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
