"""Lowest-order VEM element matrices, global assembly, Dirichlet data and PCG."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from . import isoparametric as iso
from .decomposition import DiffusionTensor, consistency_matrix, kappa_matrix
from .geometry import GeometryError, Mesh, as_vertices, centroid, diameter, signed_areas
from .projector import P0Choice, residual_dofs

log = logging.getLogger(__name__)

SHAPE_TOL = 1e-10


class ShapeMismatchError(GeometryError):
    """A closed-form tau was requested for an element of the wrong shape."""


class AssemblyError(RuntimeError):
    def __init__(self, cell: int, cause: Exception):
        super().__init__(f"cell {cell}: {cause}")
        self.cell = cell
        self.cause = cause


class SolverError(RuntimeError):
    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


# ---------------------------------------------------------------- tau policies


@dataclass(frozen=True)
class VemTrace:
    """``tau = trace(kappa) / 2``."""

    name = "trace"


@dataclass(frozen=True)
class FemQuadrature:
    """Hourglass energy of the bilinear element by an ``order``-point Gauss rule."""

    order: int = 2
    name = "fem"


@dataclass(frozen=True)
class RectangleClosed:
    name = "rectangle"


@dataclass(frozen=True)
class ParallelogramClosed:
    name = "parallelogram"


@dataclass(frozen=True)
class Constant:
    value: float
    allow_zero: bool = False
    name = "const"

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError("constant tau must be finite and nonnegative")
        if self.value == 0 and not self.allow_zero:
            raise ValueError("tau = 0 needs allow_zero=True")


TauPolicy = Union[VemTrace, FemQuadrature, RectangleClosed, ParallelogramClosed, Constant]


def parse_tau_policy(text: str) -> TauPolicy:
    """Parse ``trace``, ``fem[:order]``, ``rectangle``, ``parallelogram`` or a number."""
    key, _, arg = text.strip().lower().partition(":")
    if key == "trace":
        return VemTrace()
    if key == "fem":
        return FemQuadrature(int(arg) if arg else 2)
    if key == "rectangle":
        return RectangleClosed()
    if key == "parallelogram":
        return ParallelogramClosed()
    if key == "const":
        key = arg
    try:
        value = float(key) if "/" not in key else float(key.split("/")[0]) / float(key.split("/")[1])
    except ValueError:
        raise ValueError(f"unknown tau policy {text!r}") from None
    return Constant(value, allow_zero=value == 0)


def policy_label(policy: TauPolicy) -> str:
    if isinstance(policy, Constant):
        return f"const:{policy.value:g}"
    if isinstance(policy, FemQuadrature):
        return f"fem:{policy.order}"
    return policy.name


def _scale(v: np.ndarray) -> float:
    return diameter(v)


def _parallelogram_params(v: np.ndarray) -> tuple[float, float, float]:
    """``(a, b, theta)`` for a CCW parallelogram with one side along +x."""
    if v.shape[0] != 4:
        raise ShapeMismatchError("closed-form tau needs a quadrilateral")
    tol = SHAPE_TOL * _scale(v)
    if np.abs(v[0] + v[2] - v[1] - v[3]).max() > tol:
        raise ShapeMismatchError("element is not a parallelogram")
    e = np.roll(v, -1, axis=0) - v
    for k in range(4):
        if abs(e[k, 1]) <= tol and e[k, 0] > 0:
            nxt = e[(k + 1) % 4]
            a = float(e[k, 0])
            b = float(np.hypot(*nxt))
            theta = math.atan2(nxt[1], nxt[0])
            return a, b, theta
    raise ShapeMismatchError("parallelogram has no side parallel to the x axis")


def tau_vem(kappa, policy: TauPolicy, vertices=None):
    """Stabilization parameter for one element, or per element of a batch.

    ``kappa`` is a :class:`DiffusionTensor` or a ``(..., 2, 2)`` batch
    matching ``vertices``.
    """
    kmat = kappa_matrix(kappa)
    if isinstance(policy, VemTrace):
        tau = 0.5 * (kmat[..., 0, 0] + kmat[..., 1, 1])
        return float(tau) if tau.ndim == 0 else tau
    if isinstance(policy, Constant):
        return policy.value
    v = as_vertices(vertices)
    if isinstance(policy, FemQuadrature):
        return iso.hourglass_energy(v, kmat, iso.gauss_rule(policy.order))
    if v.ndim > 2:
        kb = np.broadcast_to(kmat, v.shape[:-2] + (2, 2))
        flat_v, flat_k = v.reshape(-1, *v.shape[-2:]), kb.reshape(-1, 2, 2)
        taus = [tau_vem(DiffusionTensor.from_matrix(k), policy, q) for q, k in zip(flat_v, flat_k)]
        return np.array(taus).reshape(v.shape[:-2])
    kappa = kappa if isinstance(kappa, DiffusionTensor) else DiffusionTensor.from_matrix(kmat)
    a, b, theta = _parallelogram_params(v)
    if isinstance(policy, RectangleClosed):
        if abs(math.cos(theta)) * b > SHAPE_TOL * _scale(v):
            raise ShapeMismatchError("element is not an axis-aligned rectangle")
        return iso.tau_rectangle(a, b, kappa)
    if isinstance(policy, ParallelogramClosed):
        return iso.tau_parallelogram(a, b, theta, kappa)
    raise TypeError(f"unknown tau policy {policy!r}")


# ------------------------------------------------------------- element level


def vem_element_matrices(vertices, kappa, tau, choice=P0Choice.VERTEX_MEAN):
    """Return ``(K_C, K_S, K_VEM)`` with dofi-dofi stabilization.

    Works on one polygon or a batch of polygons with the same vertex count;
    ``tau`` is a scalar or one value per polygon.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    v = as_vertices(vertices)
    KC = consistency_matrix(v, kappa)
    D = residual_dofs(v, choice)
    DtD = np.swapaxes(D, -1, -2) @ D
    KS = tau[..., None, None] * 0.5 * (DtD + np.swapaxes(DtD, -1, -2))
    return KC, KS, KC + KS


@dataclass(frozen=True)
class VEM:
    policy: TauPolicy = field(default_factory=VemTrace)

    @property
    def label(self) -> str:
        return f"vem[{policy_label(self.policy)}]"

    def element_matrix(self, v: np.ndarray, kappa) -> np.ndarray:
        return vem_element_matrices(v, kappa, tau_vem(kappa, self.policy, v))[2]


@dataclass(frozen=True)
class IsoFEM:
    order: int = 2

    @property
    def label(self) -> str:
        return "isofem" if self.order == 2 else f"isofem[{self.order}]"

    def element_matrix(self, v: np.ndarray, kappa) -> np.ndarray:
        if v.shape[-2] != 4:
            raise GeometryError("isoparametric FEM needs quadrilateral cells")
        return iso.fem_stiffness(v, kappa, iso.gauss_rule(self.order))


Scheme = Union[VEM, IsoFEM]
KappaField = Union[DiffusionTensor, Callable[[float, float], DiffusionTensor]]
Source = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ------------------------------------------------------------- global level


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Linear system over the unknowns listed in ``dofs``.

    Before :func:`apply_dirichlet` every mesh vertex is an unknown; after it
    ``dofs`` holds the free vertices and ``fixed``/``fixed_values`` the
    eliminated ones.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofs: np.ndarray
    n_points: int
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Full vertex vector from a solution over ``dofs``."""
        u = np.zeros(self.n_points)
        u[self.dofs] = x
        u[self.fixed] = self.fixed_values
        return u


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    wall_time: float


def cell_kappas(kappa_field: KappaField, points: np.ndarray) -> np.ndarray:
    """``(m, 2, 2)`` coefficient matrices frozen at the given points."""
    if isinstance(kappa_field, DiffusionTensor):
        return np.broadcast_to(kappa_field.matrix, (len(points), 2, 2))
    return np.array([kappa_field(float(x), float(y)).matrix for x, y in points])


def _first_bad_cell(mesh: Mesh, scheme: Scheme, ids, conn, kmats) -> tuple[int, Exception]:
    for k, cell, km in zip(ids, conn, kmats):
        try:
            scheme.element_matrix(mesh.points[cell], DiffusionTensor.from_matrix(km))
        except (GeometryError, ValueError) as exc:
            return int(k), exc
    raise AssertionError("batch failed but no single cell does")


def assemble_global(
    mesh: Mesh,
    kappa_field: KappaField,
    scheme: Scheme,
    source: Source | None = None,
) -> SparseSystem:
    """Sum element matrices into a global sparse matrix, cells in mesh order.

    ``kappa_field`` and ``source`` are frozen at each cell's area centroid;
    the load ``f(c) |P|`` is split evenly between the cell's vertices.
    """
    n = mesh.n_points
    nc = mesh.n_cells
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray] | None] = [None] * nc
    rhs = np.zeros(n)
    for ids, conn in mesh.cell_groups:
        v = mesh.points[conn]
        c = centroid(v)
        kmats = cell_kappas(kappa_field, c)
        try:
            Ke = scheme.element_matrix(v, kmats)
        except (GeometryError, ValueError) as exc:
            k, cause = _first_bad_cell(mesh, scheme, ids, conn, kmats)
            raise AssemblyError(k, cause) from exc
        if source is not None:
            load = np.asarray(source(c[:, 0], c[:, 1]), dtype=float) * signed_areas(v)
            load = np.broadcast_to(load / conn.shape[1], (conn.shape[1], len(ids))).T
            # per-cell order keeps the summation sequence fixed
            for k in range(len(ids)):
                rhs[conn[k]] += load[k]
        nv = conn.shape[1]
        for k, cid in enumerate(ids):
            blocks[cid] = (np.repeat(conn[k], nv), np.tile(conn[k], nv), Ke[k].ravel())
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    vals = np.concatenate([b[2] for b in blocks])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    # element matrices are symmetrized, so the sum must be exactly symmetric
    if (K - K.T).count_nonzero():
        raise RuntimeError("assembled matrix is not symmetric")
    return SparseSystem(K, rhs, np.arange(n), n, boundary=mesh.boundary.copy())


BoundaryData = Union[Mapping[int, float], np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def boundary_values(mesh: Mesh, g: BoundaryData) -> dict[int, float]:
    """Evaluate ``g`` (callable, per-vertex array or mapping) on ``mesh.boundary``."""
    bnd = [int(i) for i in mesh.boundary]
    if callable(g):
        pts = mesh.points[bnd]
        vals = np.asarray(g(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(bnd))
        return dict(zip(bnd, vals.tolist()))
    if isinstance(g, Mapping):
        return {i: float(g[i]) for i in bnd if i in g}
    g = np.asarray(g, dtype=float)
    if g.shape != (mesh.n_points,):
        raise ValueError("array boundary data must have one entry per mesh vertex")
    return {i: float(g[i]) for i in bnd}


def apply_dirichlet(system: SparseSystem, g: Mapping[int, float]) -> SparseSystem:
    """Eliminate the boundary vertices symmetrically, moving their coupling to the RHS.

    ``g`` maps vertex index to prescribed value and must cover
    ``system.boundary``; extra entries are constrained as well.
    """
    missing = [int(i) for i in system.boundary if int(i) not in g]
    if missing:
        raise ValueError(f"no boundary value for vertices {missing[:10]}")
    fixed = np.array(sorted(int(i) for i in g), dtype=np.int64)
    values = np.array([g[int(i)] for i in fixed], dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("boundary values must be finite")
    free_mask = np.ones(system.n_points, dtype=bool)
    free_mask[fixed] = False
    free = np.flatnonzero(free_mask)
    K = system.matrix
    rows = K[free]
    Kff = rows[:, free].tocsr()
    rhs = system.rhs[free] - rows[:, fixed] @ values
    return SparseSystem(Kff, rhs, free, system.n_points, fixed, values, system.boundary)


def solve(system: SparseSystem, tol: float = 1e-10, max_iter: int | None = None):
    """Jacobi-preconditioned CG; returns the solution over ``system.dofs``."""
    A = system.matrix
    b = system.rhs
    n = A.shape[0]
    t0 = time.perf_counter()
    if n == 0:
        return np.zeros(0), SolveReport(0, 0.0, 0.0)
    max_iter = max_iter or 10 * n
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a nonpositive diagonal entry", [])
    inv_diag = 1.0 / diag
    M = LinearOperator((n, n), matvec=lambda r: inv_diag * r, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, time.perf_counter() - t0)

    history: list[float] = []

    def record(xk):
        history.append(float(np.linalg.norm(b - A @ xk)) / bnorm)

    x = np.zeros(n)
    # cg tests its recursively updated residual; restart if the true one drifted above tol
    for _ in range(3):
        x, info = cg(A, b, x0=x, rtol=tol, atol=0.0, maxiter=max_iter - len(history), M=M,
                     callback=record)
        residual = float(np.linalg.norm(b - A @ x)) / bnorm
        if residual <= tol or info != 0 or len(history) >= max_iter:
            break
    report = SolveReport(len(history), residual, time.perf_counter() - t0)
    if info != 0 or residual > tol:
        summary = history[:: max(1, len(history) // 10)]
        raise SolverError(
            f"PCG stopped after {len(history)} iterations at relative residual {residual:.3e}",
            summary,
        )
    log.debug("pcg: %d iterations, residual %.2e", report.iterations, report.residual)
    return x, report


def solve_dirichlet_problem(
    mesh: Mesh,
    scheme: Scheme,
    kappa_field: KappaField,
    g: BoundaryData,
    source: Source | None = None,
    tol: float = 1e-10,
):
    """Assemble, constrain the mesh boundary to ``g`` and solve; returns vertex values."""
    system = assemble_global(mesh, kappa_field, scheme, source)
    reduced = apply_dirichlet(system, boundary_values(mesh, g))
    x, report = solve(reduced, tol=tol)
    return reduced.expand(x), report
