"""Command-line interface.

Subcommands: ``run-example``, ``taylor-test``, ``optimize`` and ``mesh-info``.
Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from shapediff.assemble import set_quadrature_degree
from shapediff.errors import BoundaryMarkerError, MeshFormatError, QuadratureError, ShapeDiffError
from shapediff.examples import build_example, example3
from shapediff.geometry import unit_square_mesh, validate_mesh
from shapediff.io import read_mesh, write_csv, write_vtk
from shapediff.shapeopt import OptimizeConfig, HistoryRecord, optimize, taylor_test

log = logging.getLogger("shapediff")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    mesh: str | None = None
    n: int = 16
    out: str = "out"
    example: int = 1
    steps: int = 50
    step_size: float = 0.02
    alpha: float = 10.0
    fixed: list = field(default_factory=lambda: [1, 2])
    seed: int = 42
    quad_degree: int | None = None
    threads: int = 1
    vtk: bool = True

    def validate(self):
        if self.mesh is not None and not Path(self.mesh).is_file():
            raise ConfigError(f"mesh file {self.mesh} does not exist")
        if self.n < 1:
            raise ConfigError("--n must be positive")
        if self.steps < 0:
            raise ConfigError("--steps must be non-negative")
        if self.step_size <= 0:
            raise ConfigError("--step-size must be positive")
        if self.alpha < 0:
            raise ConfigError("--alpha must be non-negative")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.example not in (1, 2, 3):
            raise ConfigError("--example must be 1, 2 or 3")
        if self.quad_degree is not None and not 1 <= self.quad_degree <= 20:
            raise ConfigError("--quad-degree must be in [1, 20]")

    def load_mesh(self):
        if self.mesh is None:
            return unit_square_mesh(self.n)
        return read_mesh(self.mesh)

    def outdir(self):
        path = Path(self.out)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _add_common(p):
    p.add_argument("--mesh", help="mesh file (.msh or .json); default: structured unit square")
    p.add_argument("--n", type=int, help="cells per side of the default unit square mesh")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--quad-degree", type=int, dest="quad_degree")
    p.add_argument("--threads", type=int, help="accepted for compatibility; assembly is single-threaded")
    p.add_argument("--config", help="JSON file with default values for these options")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="shapediff", description="Automated shape derivatives on 2D meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-example", help="assemble J and dJ for example 1, 2 or 3")
    p.add_argument("example", type=int, choices=(1, 2, 3))
    _add_common(p)

    p = sub.add_parser("taylor-test", help="Taylor remainder convergence test")
    p.add_argument("--example", type=int, choices=(1, 2, 3))
    _add_common(p)

    p = sub.add_parser("optimize", help="descent on the Neumann-constrained problem")
    p.add_argument("--steps", type=int)
    p.add_argument("--step-size", type=float, dest="step_size")
    p.add_argument("--alpha", type=float)
    p.add_argument("--fixed", type=str, help="comma-separated boundary markers held fixed")
    p.add_argument("--no-vtk", action="store_false", dest="vtk", default=None)
    _add_common(p)

    p = sub.add_parser("mesh-info", help="print mesh statistics")
    _add_common(p)
    return parser


def _parse_fixed(value):
    if isinstance(value, str):
        try:
            return [int(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--fixed expects comma-separated integers, got {value!r}") from None
    return [int(v) for v in value]


def make_config(args):
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    if "fixed" in values:
        values["fixed"] = _parse_fixed(values["fixed"])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def cmd_run_example(cfg):
    mesh = cfg.load_mesh()
    ex = build_example(cfg.example, mesh)
    J = ex.functional.value()
    dJ = ex.automatic_gradient()
    oracle = ex.oracle_gradient()
    rel = float(np.max(np.abs(dJ - oracle)) / max(np.max(np.abs(oracle)), 1e-300))
    out = cfg.outdir()
    write_csv(out / f"dJ_example{cfg.example}.csv", ["dJ"], dJ[:, None])
    print(f"J = {J:.15g}")
    print(f"|dJ|_inf = {np.max(np.abs(dJ)):.6e}")
    print(f"max relative difference to hand-derived formula = {rel:.3e}")
    return EXIT_OK


def cmd_taylor(cfg):
    mesh = cfg.load_mesh()
    ex = build_example(cfg.example, mesh)
    report = taylor_test(ex.functional, mesh, seed=cfg.seed)
    out = cfg.outdir()
    write_csv(out / f"taylor_example{cfg.example}.csv", ["s", "J", "delta1", "delta2"], report.rows())
    print(f"slope(delta1) = {report.slope1:.4f}")
    print(f"slope(delta2) = {report.slope2:.4f}")
    if report.dropped:
        print(f"dropped steps (inverted cells): {', '.join(f'{s:g}' for s in report.dropped)}")
    return EXIT_OK


def cmd_optimize(cfg):
    mesh = cfg.load_mesh()
    missing = [m for m in cfg.fixed if m not in mesh.markers]
    if missing:
        raise ConfigError(f"fixed markers {missing} do not exist on the mesh (markers: {sorted(mesh.markers)})")
    ex = example3(mesh)
    out = cfg.outdir()
    u = ex.functional.state

    def dump(k, mesh_, V):
        if cfg.vtk:
            write_vtk(out / f"shape_{k:04d}.vtk", mesh_, {"u": u, "V": V})

    opt = OptimizeConfig(ex.functional, tuple(cfg.fixed), cfg.step_size, cfg.steps, cfg.alpha)
    history = optimize(opt, callback=dump)
    write_csv(out / "history.csv", HistoryRecord.FIELDS, (r.as_row() for r in history))
    first, last = history[0], history[-1]
    print(f"J: {first.J:.10g} -> {last.J:.10g}")
    print(f"gradnorm: {first.gradnorm:.6e} -> {last.gradnorm:.6e}")
    print(f"volume: {first.volume:.10g} -> {last.volume:.10g}")
    return EXIT_OK


def cmd_mesh_info(cfg):
    mesh = cfg.load_mesh()
    counts = {int(m): int(np.sum(mesh.facet_markers == m)) for m in sorted(mesh.markers)}
    print(f"vertices: {mesh.num_vertices}")
    print(f"cells: {mesh.num_cells}")
    print(f"boundary facets: {mesh.num_facets}")
    print("markers: " + ", ".join(f"{m}:{c}" for m, c in counts.items()))
    print(f"min det: {validate_mesh(mesh):.6e}")
    return EXIT_OK


COMMANDS = {
    "run-example": cmd_run_example,
    "taylor-test": cmd_taylor,
    "optimize": cmd_optimize,
    "mesh-info": cmd_mesh_info,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    set_quadrature_degree(cfg.quad_degree)
    try:
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, FileNotFoundError, MeshFormatError, BoundaryMarkerError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeDiffError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        set_quadrature_degree(None)


if __name__ == "__main__":
    sys.exit(main())
