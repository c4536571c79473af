"""Planar polygons, quad meshes and their generators.

Polygons are plain ``(N, 2)`` float arrays ordered counter-clockwise. The
element-level routines elsewhere in the package assume that orientation;
:func:`normalize_polygon` is the single place where clockwise input gets
flipped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

AREA_EPS = 1e-14


class GeometryError(ValueError):
    """Invalid geometric input."""


class DegenerateGeometryError(GeometryError):
    """Zero area, zero-length edge, or coincident vertices."""


class OrientationError(GeometryError):
    """A polygon that must be counter-clockwise is not."""


def as_vertices(vertices) -> np.ndarray:
    """Validate a vertex array of shape ``(N, 2)`` or a batch ``(..., N, 2)``."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim < 2 or v.shape[-1] != 2 or v.shape[-2] < 3:
        raise GeometryError(f"expected an (N>=3, 2) vertex array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise GeometryError("vertex coordinates must be finite")
    if np.any(np.all(v == np.roll(v, -1, axis=-2), axis=-1)):
        raise DegenerateGeometryError("repeated consecutive vertex")
    return v


def signed_areas(v: np.ndarray) -> np.ndarray:
    """Shoelace area of each polygon in a batch, no validation."""
    # relative to the first vertex: avoids cancellation for small cells far from the origin
    v = v - v[..., :1, :]
    x, y = v[..., 0], v[..., 1]
    return 0.5 * (
        np.sum(x * np.roll(y, -1, axis=-1), axis=-1) - np.sum(np.roll(x, -1, axis=-1) * y, axis=-1)
    )


def diameter(vertices):
    v = np.asarray(vertices, dtype=float)
    diff = v[..., :, None, :] - v[..., None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1)).max(axis=(-2, -1))
    return float(d) if d.ndim == 0 else d


def _check_nondegenerate(v: np.ndarray, area: np.ndarray) -> None:
    scale = np.maximum(1.0, diameter(v)) ** 2
    if np.any(np.abs(area) <= AREA_EPS * scale):
        raise DegenerateGeometryError("polygon has zero area")


def polygon_area(vertices):
    """Signed (shoelace) area; positive for counter-clockwise loops."""
    v = as_vertices(vertices)
    area = signed_areas(v)
    _check_nondegenerate(v, area)
    return float(area) if area.ndim == 0 else area


def ccw_area(vertices):
    """Area of polygon(s) required to be counter-clockwise."""
    area = polygon_area(vertices)
    if np.any(np.asarray(area) < 0):
        raise OrientationError("polygon is clockwise; normalize it first")
    return area


def normalize_polygon(vertices) -> tuple[np.ndarray, bool]:
    """Return the vertices in CCW order and whether they were reversed."""
    v = as_vertices(vertices)
    if v.ndim != 2:
        raise GeometryError("normalize_polygon takes a single polygon")
    if polygon_area(v) < 0:
        return v[::-1].copy(), True
    return v.copy(), False


def centroid(vertices) -> np.ndarray:
    """Area centroid of simple polygon(s)."""
    v = as_vertices(vertices)
    origin = v[..., 0, :]
    x, y = v[..., 0] - origin[..., :1], v[..., 1] - origin[..., 1:]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum(axis=-1)
    _check_nondegenerate(v, area)
    c = np.stack([((x + xn) * cross).sum(axis=-1), ((y + yn) * cross).sum(axis=-1)], axis=-1)
    return origin + c / (6.0 * area[..., None])


def is_convex(vertices):
    """Strict convexity of CCW polygon(s) (every turn to the left)."""
    v = as_vertices(vertices)
    e = np.roll(v, -1, axis=-2) - v
    en = np.roll(e, -1, axis=-2)
    turn = e[..., 0] * en[..., 1] - e[..., 1] * en[..., 0]
    ok = np.all(turn > 0, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


class EdgeData(NamedTuple):
    edges: np.ndarray  # e_i = V_{i+1} - V_i
    normals: np.ndarray  # outward unit normals
    lengths: np.ndarray


def edge_data(vertices) -> EdgeData:
    v = as_vertices(vertices)
    ccw_area(v)
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    if np.any(lengths <= AREA_EPS * max(1.0, diameter(v))):
        raise DegenerateGeometryError("zero-length edge")
    # outward normal of a CCW edge is the edge turned clockwise
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
    return EdgeData(e, normals, lengths)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polygonal mesh: points, CCW vertex loops per cell, Dirichlet boundary."""

    points: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    boundary: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError("points must be an (n, 2) array")
        pts.setflags(write=False)
        cells = tuple(tuple(int(i) for i in c) for c in self.cells)
        bnd = np.unique(np.asarray(self.boundary, dtype=np.int64))
        bnd.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary", bnd)
        n = len(pts)
        for k, c in enumerate(cells):
            if len(c) < 3 or min(c) < 0 or max(c) >= n:
                raise GeometryError(f"cell {k} has invalid vertex indices {c}")
        if len(bnd) and (bnd[0] < 0 or bnd[-1] >= n):
            raise GeometryError("boundary index out of range")
        for ids, conn in self.cell_groups:
            area = signed_areas(pts[conn])
            bad = np.flatnonzero(area <= AREA_EPS * np.maximum(1.0, diameter(pts[conn])) ** 2)
            if len(bad):
                raise OrientationError(f"cell {ids[bad[0]]} is not positively oriented")

    @cached_property
    def cell_groups(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Cells grouped by vertex count: ``(cell ids, (m, N) connectivity)`` per group."""
        groups: dict[int, list[int]] = {}
        for k, c in enumerate(self.cells):
            groups.setdefault(len(c), []).append(k)
        out = []
        for nv in sorted(groups):
            ids = np.array(groups[nv], dtype=np.int64)
            out.append((ids, np.array([self.cells[k] for k in ids], dtype=np.int64)))
        return out

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_vertices(self, k: int) -> np.ndarray:
        return self.points[list(self.cells[k])]

    def cell_areas(self) -> np.ndarray:
        out = np.empty(self.n_cells)
        for ids, conn in self.cell_groups:
            out[ids] = signed_areas(self.points[conn])
        return out

    def h_mean(self) -> float:
        """Mean cell diameter."""
        return float(np.mean(np.concatenate(
            [np.atleast_1d(diameter(self.points[conn])) for _, conn in self.cell_groups]
        )))

    def to_json(self) -> dict[str, Any]:
        return {
            "points": [[float(x), float(y)] for x, y in self.points],
            "cells": [list(c) for c in self.cells],
            "boundary": [int(i) for i in self.boundary],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Mesh":
        return cls(
            points=np.array(data["points"], dtype=float).reshape(-1, 2),
            cells=data["cells"],
            boundary=data.get("boundary", []),
            meta=dict(data.get("meta", {})),
        )


def save_mesh(mesh: Mesh, path) -> None:
    # json writes floats with repr, which round-trips exactly
    Path(path).write_text(json.dumps(mesh.to_json()), encoding="utf-8")


def load_mesh(path) -> Mesh:
    return Mesh.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def make_structured_quad_mesh(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Uniform ``nx`` by ``ny`` grid of quads on ``(x0, x1, y0, y1)``.

    Point ``(i, j)`` has index ``j * (nx + 1) + i``; cells are listed
    row by row with vertices (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("empty domain")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (nx + 1) + i

    cells = [
        (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1))
        for j in range(ny)
        for i in range(nx)
    ]
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    on_bnd = (I == 0) | (I == nx) | (J == 0) | (J == ny)
    boundary = np.flatnonzero(on_bnd.ravel())
    meta = {"generator": "structured", "nx": nx, "ny": ny, "domain": [x0, x1, y0, y1]}
    return Mesh(points, cells, boundary, meta)


def perturb_mesh(
    mesh: Mesh,
    amplitude: float,
    seed: int,
    *,
    require_convex: bool = True,
    max_retries: int = 20,
) -> Mesh:
    """Move interior points by seeded uniform offsets in ``[-a h, a h]^2``.

    ``h`` is the local spacing: the shortest edge incident to the point in
    the input mesh. Boundary points stay fixed. Points whose incident cells
    come out inverted (or non-convex with ``require_convex``) are redrawn up
    to ``max_retries`` times and then pulled back towards their original
    position by halving the offset.
    """
    if not 0.0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")
    if amplitude == 0.0:
        return Mesh(mesh.points.copy(), mesh.cells, mesh.boundary, dict(mesh.meta))

    pts0 = mesh.points
    n = len(pts0)
    h = np.full(n, np.inf)
    incident: list[list[int]] = [[] for _ in range(n)]
    for k, c in enumerate(mesh.cells):
        for a, b in zip(c, c[1:] + c[:1]):
            length = float(np.hypot(*(pts0[b] - pts0[a])))
            h[a] = min(h[a], length)
            h[b] = min(h[b], length)
            incident[a].append(k)
    interior = np.ones(n, dtype=bool)
    interior[mesh.boundary] = False

    # Philox is counter based: one stream per seed, reproducible across platforms
    rng = np.random.Generator(np.random.Philox(seed))
    offsets = rng.uniform(-1.0, 1.0, size=(n, 2)) * (amplitude * h)[:, None]
    offsets[~interior] = 0.0

    groups = mesh.cell_groups

    def bad_cells(pts):
        bad = []
        for ids, conn in groups:
            v = pts[conn]
            ok = signed_areas(v) > AREA_EPS * np.maximum(1.0, diameter(v)) ** 2
            if require_convex:
                ok &= is_convex(v)
            bad.extend(ids[~ok].tolist())
        return bad

    pts = pts0 + offsets
    bad = bad_cells(pts)
    for attempt in range(max_retries + 30):
        if not bad:
            break
        movers = sorted({i for k in bad for i in mesh.cells[k] if interior[i]})
        if attempt < max_retries:
            offsets[movers] = rng.uniform(-1.0, 1.0, size=(len(movers), 2)) * (
                amplitude * h[movers]
            )[:, None]
        else:
            offsets[movers] *= 0.5
        pts = pts0 + offsets
        bad = bad_cells(pts)
    if bad:
        raise GeometryError(f"perturbation left {len(bad)} invalid cells")

    meta = dict(mesh.meta)
    meta.update({"perturbation": {"amplitude": amplitude, "seed": seed}})
    return Mesh(pts, mesh.cells, mesh.boundary, meta)
