"""Hourglass-propagation and manufactured-solution studies, element inspection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import isoparametric as iso
from .decomposition import DiffusionTensor, decompose
from .geometry import GeometryError, Mesh, as_vertices, is_convex, make_structured_quad_mesh, perturb_mesh
from .vem import (
    VEM,
    Constant,
    IsoFEM,
    Scheme,
    SolverError,
    TauPolicy,
    parse_tau_policy,
    policy_label,
    solve_dirichlet_problem,
    tau_vem,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    n: int
    h_mean: float
    tau: float | None = None
    linf_error: float | None = None
    interior_max: float | None = None
    rate: float | None = None


@dataclass
class FieldRecord:
    """A solved field kept for VTK output."""

    name: str
    mesh: Mesh
    u: np.ndarray
    error: np.ndarray


@dataclass
class ExperimentResult:
    rows: list[ErrorRow]
    fields: list[FieldRecord] = field(default_factory=list)


def parse_scheme(text: str) -> Scheme:
    """``isofem[:order]`` or ``vem[:policy]`` (policy as in :func:`parse_tau_policy`)."""
    key, _, arg = text.strip().lower().partition(":")
    if key == "isofem":
        return IsoFEM(int(arg) if arg else 2)
    if key == "vem":
        return VEM(parse_tau_policy(arg or "trace"))
    raise ValueError(f"unknown scheme {text!r}")


# ------------------------------------------------------------ hourglass study


def _sawtooth(t: np.ndarray) -> np.ndarray:
    """Piecewise-linear function equal to ``(-1)^k`` at every integer ``k``."""
    # grid coordinates like 20 * (3 / 20) miss the integer by an ulp; snap them
    r = np.rint(t)
    t = np.where(np.abs(t - r) < 1e-9, r, t)
    k = np.floor(t)
    return (-1.0) ** k * (1.0 - 2.0 * (t - k))


def checkerboard_boundary(mesh: Mesh, amplitude: float = 0.25, oscillations: int = 20) -> dict[int, float]:
    """Dirichlet data oscillating ``oscillations`` times along every edge of the unit square.

    The trace is ``amplitude * s(N x) * s(N y)`` with ``s`` the unit
    sawtooth, so corner (0, 0) gets ``+amplitude`` and on an
    ``N x N`` grid the boundary vertex ``(i, j)`` gets
    ``amplitude * (-1)^(i+j)``. Finer grids sample the same function.
    """
    meta = mesh.meta
    if meta.get("generator") != "structured" or meta.get("domain") != [0.0, 1.0, 0.0, 1.0]:
        raise GeometryError("checkerboard data needs a structured mesh of the unit square")
    n = meta["nx"]
    if meta["ny"] != n or n % 2:
        raise GeometryError("checkerboard data needs an n x n mesh with n even")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    pts = mesh.points[mesh.boundary]
    vals = amplitude * _sawtooth(oscillations * pts[:, 0]) * _sawtooth(oscillations * pts[:, 1])
    return {int(i): float(v) for i, v in zip(mesh.boundary, vals)}


def interior_mask(mesh: Mesh, margin: float) -> np.ndarray:
    p = mesh.points
    dist = np.minimum.reduce([p[:, 0], 1 - p[:, 0], p[:, 1], 1 - p[:, 1]])
    return dist >= margin - 1e-12


@dataclass(frozen=True)
class HourglassConfig:
    sizes: tuple[int, ...] = (20, 40, 80)
    taus: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0, 2.0 / 3.0)
    amplitude: float = 0.25
    margin: float = 0.25
    oscillations: int = 20
    reference_size: int = 160
    include_fem: bool = True
    keep_fields: bool = False

    def __post_init__(self):
        if not self.taus:
            raise ValueError("tau list is empty")
        if not self.sizes:
            raise ValueError("size list is empty")
        if any(n <= 0 or n % 2 for n in self.sizes):
            raise ValueError("mesh sizes must be positive and even")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if any(t <= 0 for t in self.taus):
            raise ValueError("hourglass study needs tau > 0")


def _reference_on(mesh: Mesh, ref_mesh: Mesh, ref_u: np.ndarray) -> np.ndarray | None:
    """Reference values at the coarse vertices when they are also fine vertices."""
    nf = ref_mesh.meta["nx"]
    n = mesh.meta["nx"]
    if nf % n:
        return None
    i = np.rint(mesh.points[:, 0] * nf).astype(int)
    j = np.rint(mesh.points[:, 1] * nf).astype(int)
    return ref_u[j * (nf + 1) + i]


def run_hourglass(config: HourglassConfig = HourglassConfig()) -> ExperimentResult:
    """Laplace problem with checkerboard Dirichlet data for every (n, tau).

    Each row reports the largest ``|u_h|`` at vertices at least ``margin``
    away from the boundary and the max vertex distance to a fine isoparametric
    reference solution.
    """
    kappa = DiffusionTensor.identity()
    ref_mesh = make_structured_quad_mesh(config.reference_size, config.reference_size)
    ref_u, _ = solve_dirichlet_problem(
        ref_mesh, IsoFEM(), kappa, checkerboard_boundary(ref_mesh, config.amplitude, config.oscillations)
    )
    result = ExperimentResult([])
    schemes: list[tuple[Scheme, float | None]] = [(VEM(Constant(t)), t) for t in config.taus]
    if config.include_fem:
        schemes.append((IsoFEM(), None))
    for n in config.sizes:
        mesh = make_structured_quad_mesh(n, n)
        g = checkerboard_boundary(mesh, config.amplitude, config.oscillations)
        inner = interior_mask(mesh, config.margin)
        ref = _reference_on(mesh, ref_mesh, ref_u)
        h = mesh.h_mean()
        for scheme, tau in schemes:
            try:
                u, report = solve_dirichlet_problem(mesh, scheme, kappa, g)
            except SolverError as exc:
                raise SolverError(f"n={n}, {scheme.label}: {exc}", exc.residuals) from exc
            except Exception:
                log.error("hourglass run failed at n=%d, %s", n, scheme.label)
                raise
            err = u - ref if ref is not None else np.full_like(u, np.nan)
            result.rows.append(
                ErrorRow(
                    scheme="vem" if tau is not None else scheme.label,
                    n=n,
                    h_mean=h,
                    tau=tau,
                    linf_error=float(np.abs(err).max()) if ref is not None else None,
                    interior_max=float(np.abs(u[inner]).max()) if inner.any() else 0.0,
                )
            )
            log.info("hourglass n=%d %s: %d PCG iterations", n, scheme.label, report.iterations)
            if config.keep_fields:
                name = f"hourglass_n{n}_{scheme.label}".replace(":", "-").replace("[", "_").replace("]", "")
                result.fields.append(FieldRecord(name, mesh, u, err))
    return result


# ------------------------------------------------------ manufactured solution


@dataclass(frozen=True)
class MMSProblem:
    """Smooth exact solution with a full, variable diffusion tensor on the unit square."""

    @staticmethod
    def u(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return (
            x**3 - x * y**2 + x**2 * y - x * y + x**2 - x + y - 1
            + np.sin(5 * x) * np.sin(7 * y)
            + np.log(1 + x**2 + y**4)
        )

    @staticmethod
    def grad_u(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        D = 1 + x**2 + y**4
        ux = 3 * x**2 - y**2 + 2 * x * y - y + 2 * x - 1 + 5 * np.cos(5 * x) * np.sin(7 * y) + 2 * x / D
        uy = -2 * x * y + x**2 - x + 1 + 7 * np.sin(5 * x) * np.cos(7 * y) + 4 * y**3 / D
        return ux, uy

    @staticmethod
    def kappa(x: float, y: float) -> DiffusionTensor:
        return DiffusionTensor(1 + y * y, -x * y, 1 + x * x)

    @classmethod
    def f(cls, x, y):
        """``-div(kappa grad u)``, expanded by hand."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        D = 1 + x**2 + y**4
        ss = np.sin(5 * x) * np.sin(7 * y)
        ux, uy = cls.grad_u(x, y)
        uxx = 6 * x + 2 * y + 2 - 25 * ss + (2 * D - 4 * x**2) / D**2
        uyy = -2 * x - 49 * ss + (12 * y**2 * D - 16 * y**6) / D**2
        uxy = -2 * y + 2 * x - 1 + 35 * np.cos(5 * x) * np.cos(7 * y) - 8 * x * y**3 / D**2
        # d(k11)/dx + d(k12)/dy = -x and d(k12)/dx + d(k22)/dy = -y
        return -((1 + y**2) * uxx - 2 * x * y * uxy + (1 + x**2) * uyy - x * ux - y * uy)

    g = u


def mms_data():
    """``(u, f, g, kappa)`` callables of the manufactured problem."""
    p = MMSProblem
    return p.u, p.f, p.g, p.kappa


@dataclass(frozen=True)
class MMSConfig:
    sizes: tuple[int, ...] = (10, 20, 40, 80)
    perturb: float = 0.0
    seed: int = 0
    schemes: tuple[str, ...] = ("isofem", "vem:trace")
    keep_fields: bool = False

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("need at least two mesh sizes for a rate")
        for s in self.schemes:
            parse_scheme(s)


def mms_mesh(n: int, perturb: float, seed: int) -> Mesh:
    mesh = make_structured_quad_mesh(n, n)
    return perturb_mesh(mesh, perturb, seed) if perturb > 0 else mesh


def run_mms(config: MMSConfig = MMSConfig()) -> ExperimentResult:
    u, f, g, kappa = mms_data()
    result = ExperimentResult([])
    meshes = {n: mms_mesh(n, config.perturb, config.seed) for n in config.sizes}
    for name in config.schemes:
        scheme = parse_scheme(name)
        prev: tuple[float, float] | None = None
        for n in config.sizes:
            mesh = meshes[n]
            uh, _ = solve_dirichlet_problem(mesh, scheme, kappa, g, f)
            err = uh - u(mesh.points[:, 0], mesh.points[:, 1])
            e = float(np.abs(err).max())
            h = mesh.h_mean()
            rate = math.log(prev[1] / e) / math.log(prev[0] / h) if prev else None
            prev = (h, e)
            tau = scheme.policy.value if isinstance(scheme, VEM) and isinstance(scheme.policy, Constant) else None
            result.rows.append(ErrorRow(scheme.label, n, h, tau, e, None, rate))
            if config.keep_fields:
                label = scheme.label.replace(":", "-").replace("[", "_").replace("]", "")
                result.fields.append(FieldRecord(f"mms_n{n}_{label}", mesh, uh, err))
    return result


# ------------------------------------------------------------ inspection


@dataclass
class ElementReport:
    vertices: np.ndarray
    kappa: DiffusionTensor
    area: float
    convex: bool
    A: np.ndarray
    B: np.ndarray
    gamma: np.ndarray
    C: np.ndarray
    taus: dict[str, float | str]
    stiffness: dict[str, np.ndarray]
    identity_residual: float | str
    b_is_parallelogram_matrix: bool


PARALLELOGRAM_B = 0.25 * np.array(
    [[1, -1, 1, -1], [-1, 1, -1, 1], [1, -1, 1, -1], [-1, 1, -1, 1]], dtype=float
)


def inspect_element(vertices, kappa: DiffusionTensor, policies: list[TauPolicy] | None = None) -> ElementReport:
    """Decomposition of a single quad plus tau and ``A + tau B`` for each policy."""
    v = as_vertices(vertices)
    policies = policies or [parse_tau_policy("trace"), parse_tau_policy("fem")]
    dec = decompose(v, kappa)
    taus: dict[str, float | str] = {}
    stiff: dict[str, np.ndarray] = {}
    for p in policies:
        label = policy_label(p)
        try:
            t = float(tau_vem(kappa, p, v))
        except GeometryError as exc:
            taus[label] = f"error: {exc}"
            continue
        taus[label] = t
        stiff[label] = dec.A + t * dec.B
    try:
        rule = iso.gauss_rule(2)
        K = iso.fem_stiffness(v, kappa, rule)
        tau_q = iso.hourglass_energy(v, kappa, rule)
        residual: float | str = float(np.abs(K - (dec.A + tau_q * dec.B)).max())
    except iso.InvalidMapError as exc:
        residual = f"error: {exc}"
    return ElementReport(
        vertices=v,
        kappa=kappa,
        area=dec.area,
        convex=is_convex(v),
        A=dec.A,
        B=dec.B,
        gamma=dec.gamma,
        C=dec.C,
        taus=taus,
        stiffness=stiff,
        identity_residual=residual,
        b_is_parallelogram_matrix=bool(np.allclose(dec.B, PARALLELOGRAM_B, rtol=0, atol=1e-14)),
    )


def _fmt_matrix(m: np.ndarray) -> str:
    return "\n".join("  " + " ".join(f"{x: .10g}" for x in row) for row in np.atleast_2d(m))


def format_element_report(r: ElementReport) -> str:
    lines = [
        "vertices:",
        _fmt_matrix(r.vertices),
        f"kappa: k11={r.kappa.k11:g} k12={r.kappa.k12:g} k22={r.kappa.k22:g}",
        f"area: {r.area:.15g}   convex: {r.convex}",
        "gamma: " + " ".join(f"{g:.15g}" for g in r.gamma),
        "C:",
        _fmt_matrix(r.C),
        "A:",
        _fmt_matrix(r.A),
        "B:" + ("  (constant parallelogram matrix)" if r.b_is_parallelogram_matrix else ""),
        _fmt_matrix(r.B),
    ]
    for label, t in r.taus.items():
        lines.append(f"tau[{label}]: {t if isinstance(t, str) else format(t, '.15g')}")
        if label in r.stiffness:
            lines.append(f"K[{label}] = A + tau B:")
            lines.append(_fmt_matrix(r.stiffness[label]))
    res = r.identity_residual
    lines.append(
        "quadrature identity residual max|K_quad - (A + tau_quad B)|: "
        + (res if isinstance(res, str) else f"{res:.3e}")
    )
    return "\n".join(lines)


def element_report_rows(r: ElementReport) -> list[dict[str, object]]:
    """Flat ``(quantity, i, j, value)`` records for CSV output."""
    rows: list[dict[str, object]] = []

    def add(name, m):
        m = np.atleast_2d(m)
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                rows.append({"quantity": name, "i": i, "j": j, "value": float(m[i, j])})

    add("gamma", r.gamma)
    add("C", r.C)
    add("A", r.A)
    add("B", r.B)
    for label, t in r.taus.items():
        rows.append({"quantity": f"tau[{label}]", "i": 0, "j": 0, "value": t})
        if label in r.stiffness:
            add(f"K[{label}]", r.stiffness[label])
    rows.append({"quantity": "identity_residual", "i": 0, "j": 0, "value": r.identity_residual})
    return rows


def tau_table(shape: str, a_values, b_values, thetas_deg, kappas: list[DiffusionTensor]) -> list[dict[str, float]]:
    """Closed-form tau next to its quadrature value and ``trace(kappa)/2``."""
    rows = []
    for a in a_values:
        for b in b_values:
            for th in thetas_deg if shape == "parallelogram" else [90.0]:
                theta = math.radians(th)
                v = iso.parallelogram_vertices(a, b, theta)
                for k in kappas:
                    closed = (
                        iso.tau_rectangle(a, b, k) if shape == "rectangle"
                        else iso.tau_parallelogram(a, b, theta, k)
                    )
                    rows.append({
                        "shape": shape, "a": a, "b": b, "theta_deg": th,
                        "k11": k.k11, "k12": k.k12, "k22": k.k22,
                        "tau_closed": closed,
                        "tau_quadrature": iso.hourglass_energy(v, k, iso.gauss_rule(2)),
                        "tau_trace_half": 0.5 * k.trace,
                    })
    return rows
