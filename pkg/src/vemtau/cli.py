"""Command-line entry point: ``vemtau {element,tau,hourglass,mms,project}``.

Every subcommand takes ``--config FILE.toml``. Keys mirror the long flag
names (dashes or underscores) either at top level or under a table named
after the subcommand; explicit flags win over the file.

On failure a single JSON object ``{"error": category, "message": ...}`` is
written to stderr and the exit code identifies the category.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .decomposition import DiffusionTensor
from .geometry import GeometryError, as_vertices, load_mesh, normalize_polygon
from .output import csv_text, write_csv, write_dict_csv, write_vtk
from .projector import P0Choice, project_basis_function, project_nodal_function, residual_dofs
from .vem import AssemblyError, SolverError, parse_tau_policy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors become exceptions so they get the JSON error line."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


EXIT_CODES = {"usage": 2, "geometry": 3, "solver": 4, "io": 5, "config": 6, "internal": 1}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _vertices(args) -> np.ndarray:
    if args.file:
        data = json.loads(Path(args.file).read_text(encoding="utf-8"))
        if isinstance(data, dict) and "points" in data:
            mesh = load_mesh(args.file)
            pts = mesh.cell_vertices(args.cell)
        else:
            pts = np.asarray(data, dtype=float)
    elif args.vertices:
        pts = np.asarray(_floats(args.vertices), dtype=float).reshape(-1, 2)
    else:
        raise ValueError("give --vertices or --file")
    v, flipped = normalize_polygon(as_vertices(pts))
    if flipped:
        logging.getLogger(__name__).warning("input polygon was clockwise; reversed it")
    return v


def _kappa(values) -> DiffusionTensor:
    if len(values) != 3:
        raise ValueError("--kappa takes three numbers: k11 k12 k22")
    return DiffusionTensor(*values)


def _add_geometry_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vertices", help='polygon vertices "x0,y0 x1,y1 ..." in order')
    p.add_argument("--file", help="JSON file: vertex list or mesh (see --cell)")
    p.add_argument("--cell", type=int, default=0, help="cell index when --file is a mesh")
    p.add_argument("--kappa", type=float, nargs=3, default=[1.0, 0.0, 1.0], metavar=("K11", "K12", "K22"))


def cmd_element(args) -> int:
    v = _vertices(args)
    report = ex.inspect_element(v, _kappa(args.kappa), [parse_tau_policy(t) for t in args.tau])
    if args.format == "csv":
        write_dict_csv(ex.element_report_rows(report), sys.stdout)
    else:
        print(ex.format_element_report(report))
    return 0


def cmd_tau(args) -> int:
    if len(args.kappa) % 3:
        raise ValueError("--kappa takes a multiple of three numbers")
    kappas = [_kappa(args.kappa[i : i + 3]) for i in range(0, len(args.kappa), 3)]
    rows = ex.tau_table(args.shape, args.a, args.b, args.theta, kappas)
    write_dict_csv(rows, sys.stdout)
    return 0


def _write_result(result: ex.ExperimentResult, out: str | None, stem: str, vtk: bool) -> None:
    if out is None:
        sys.stdout.write(csv_text(result.rows))
        return
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, outdir / f"{stem}.csv")
    if vtk:
        for rec in result.fields:
            write_vtk(outdir / f"{rec.name}.vtk", rec.mesh, {"u": rec.u, "error": rec.error}, rec.name)


def cmd_hourglass(args) -> int:
    cfg = ex.HourglassConfig(
        sizes=tuple(args.sizes),
        taus=tuple(args.taus),
        amplitude=args.amplitude,
        margin=args.margin,
        oscillations=args.oscillations,
        reference_size=args.reference_size,
        keep_fields=args.vtk,
    )
    _write_result(ex.run_hourglass(cfg), args.out, "hourglass", args.vtk)
    return 0


def cmd_mms(args) -> int:
    cfg = ex.MMSConfig(
        sizes=tuple(args.sizes),
        perturb=args.perturb,
        seed=args.seed,
        schemes=tuple(args.schemes),
        keep_fields=args.vtk,
    )
    _write_result(ex.run_mms(cfg), args.out, "mms", args.vtk)
    return 0


def cmd_project(args) -> int:
    v = _vertices(args)
    choice = P0Choice(args.p0)
    print(f"P0: {choice.value}")
    for i in range(len(v)):
        p = project_basis_function(v, i, choice)
        print(f"Pi phi_{i + 1} = {p.a:.15g} + {p.b:.15g} x + {p.c:.15g} y")
    if args.values:
        p = project_nodal_function(v, _floats(args.values), choice)
        print(f"Pi v = {p.a:.15g} + {p.b:.15g} x + {p.c:.15g} y")
    print("residual dofs D[k, i] = phi_i(V_k) - (Pi phi_i)(V_k):")
    for row in residual_dofs(v, choice):
        print("  " + " ".join(f"{x: .12g}" for x in row))
    return 0


def _tau_value(text: str) -> float:
    num, _, den = text.partition("/")
    return float(num) / float(den) if den else float(num)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vemtau", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("element", help="decompose one quad: A, B, gamma, C, tau per policy")
    _add_geometry_args(p)
    p.add_argument("--tau", nargs="+", default=["trace", "fem"],
                   help="policies: trace, fem[:order], rectangle, parallelogram, or a number")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.set_defaults(func=cmd_element)

    p = sub.add_parser("tau", help="closed-form tau vs quadrature for rectangles/parallelograms")
    p.add_argument("--shape", choices=["rectangle", "parallelogram"], default="rectangle")
    p.add_argument("--a", type=float, nargs="+", default=[1.0])
    p.add_argument("--b", type=float, nargs="+", default=[1.0])
    p.add_argument("--theta", type=float, nargs="+", default=[90.0], help="degrees")
    p.add_argument("--kappa", type=float, nargs="+", default=[1.0, 0.0, 1.0],
                   help="one or more k11 k12 k22 triples")
    p.set_defaults(func=cmd_tau)

    d = ex.HourglassConfig()
    p = sub.add_parser("hourglass", help="checkerboard Dirichlet data vs tau and mesh size")
    p.add_argument("--sizes", type=int, nargs="+", default=list(d.sizes))
    p.add_argument("--taus", type=_tau_value, nargs="+", default=list(d.taus))
    p.add_argument("--amplitude", type=float, default=d.amplitude)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--oscillations", type=int, default=d.oscillations)
    p.add_argument("--reference-size", type=int, default=d.reference_size)
    p.add_argument("--out", help="output directory (default: CSV to stdout)")
    p.add_argument("--vtk", action="store_true", help="also write VTK fields to --out")
    p.set_defaults(func=cmd_hourglass)

    d = ex.MMSConfig()
    p = sub.add_parser("mms", help="manufactured-solution FEM/VEM comparison")
    p.add_argument("--sizes", type=int, nargs="+", default=list(d.sizes))
    p.add_argument("--perturb", type=float, default=d.perturb)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--schemes", nargs="+", default=list(d.schemes),
                   help="isofem[:order], vem[:policy]")
    p.add_argument("--out")
    p.add_argument("--vtk", action="store_true")
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("project", help="dump the linear projection of the basis on a polygon")
    _add_geometry_args(p)
    p.add_argument("--values", help="optional nodal values to project")
    p.add_argument("--p0", choices=[c.value for c in P0Choice], default=P0Choice.VERTEX_MEAN.value)
    p.set_defaults(func=cmd_project)

    for sp in (sub.choices.values()):
        sp.add_argument("--config", help="TOML file with defaults for this command")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    with open(args.config, "rb") as fh:
        data = tomllib.load(fh)
    table = dict(data.get(args.command, {}))
    table.update({k: v for k, v in data.items() if not isinstance(v, dict)})
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, value in table.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise KeyError(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _category(exc: BaseException) -> str:
    if isinstance(exc, AssemblyError):
        exc = exc.cause
    if isinstance(exc, GeometryError):
        return "geometry"
    if isinstance(exc, SolverError):
        return "solver"
    if isinstance(exc, (OSError, json.JSONDecodeError)):
        return "io"
    if isinstance(exc, (KeyError, tomllib.TOMLDecodeError)):
        return "config"
    if isinstance(exc, ValueError):
        return "usage"
    return "internal"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except Exception as exc:  # reported as one machine-readable line
        cat = _category(exc)
        msg = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0])
        print(json.dumps({"error": cat, "message": msg}), file=sys.stderr)
        return EXIT_CODES[cat]


if __name__ == "__main__":
    sys.exit(main())
