"""CSV tables and legacy-ASCII VTK files."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from .experiments import ErrorRow
from .geometry import Mesh

CSV_COLUMNS = ("scheme", "n", "h_mean", "tau", "Linf_error", "interior_max", "rate")
_FIELDS = ("scheme", "n", "h_mean", "tau", "linf_error", "interior_max", "rate")

# VTK cell type ids
VTK_TRIANGLE = 5
VTK_POLYGON = 7
VTK_QUAD = 9


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Iterable[ErrorRow], dest: str | Path | TextIO) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no results to write")
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_cell(getattr(r, f)) for f in _FIELDS])


def csv_text(rows: Iterable[ErrorRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(src: str | Path | TextIO) -> list[ErrorRow]:
    if isinstance(src, (str, Path)):
        with open(src, newline="", encoding="utf-8") as fh:
            return read_csv(fh)
    reader = csv.reader(src)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")

    def num(s, cast=float):
        return None if s == "" else cast(s)

    return [
        ErrorRow(rec[0], int(rec[1]), float(rec[2]), num(rec[3]), num(rec[4]), num(rec[5]), num(rec[6]))
        for rec in reader
    ]


def write_dict_csv(rows: list[Mapping[str, object]], dest: TextIO) -> None:
    if not rows:
        raise ValueError("no rows to write")
    writer = csv.DictWriter(dest, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _cell(v) for k, v in r.items()})


def write_vtk(path: str | Path, mesh: Mesh, point_data: Mapping[str, np.ndarray], title: str = "vemtau") -> None:
    """Unstructured grid in legacy ASCII format with scalar point fields."""
    n = mesh.n_points
    for name, values in point_data.items():
        if np.shape(values) != (n,):
            raise ValueError(f"point field {name!r} has shape {np.shape(values)}, expected ({n},)")
    lines = [
        "# vtk DataFile Version 3.0",
        title.splitlines()[0][:255] if title else "vemtau",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.points.tolist()]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    lines += [" ".join(map(str, (len(c),) + c)) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [
        str(VTK_QUAD if len(c) == 4 else VTK_TRIANGLE if len(c) == 3 else VTK_POLYGON)
        for c in mesh.cells
    ]
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(x)) if np.isfinite(x) else "nan" for x in np.asarray(values, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
