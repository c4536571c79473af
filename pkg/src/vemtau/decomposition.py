"""Quadrature-free pieces of the quadrilateral stiffness split ``K = A + tau B``.

Formulas use 1-based cyclic vertex labels ``V_1..V_4`` while arrays are
0-based, so the alternating sign ``(-1)^i`` of label ``i`` is stored as
``HOURGLASS_SIGNS[i - 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import DegenerateGeometryError, GeometryError, as_vertices, ccw_area

# (-1)^i for i = 1..4
HOURGLASS_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0])
# vertex values of the hourglass mode
HOURGLASS_DOFS = 0.5 * HOURGLASS_SIGNS


@dataclass(frozen=True)
class DiffusionTensor:
    """Constant symmetric positive-definite 2x2 coefficient."""

    k11: float
    k12: float
    k22: float

    def __post_init__(self):
        vals = (self.k11, self.k12, self.k22)
        if not all(np.isfinite(vals)):
            raise ValueError("diffusion tensor entries must be finite")
        if not (self.k11 > 0 and self.k11 * self.k22 - self.k12**2 > 0):
            raise ValueError(f"diffusion tensor {vals} is not positive definite")

    @classmethod
    def identity(cls, scale: float = 1.0) -> "DiffusionTensor":
        return cls(scale, 0.0, scale)

    @classmethod
    def from_matrix(cls, m) -> "DiffusionTensor":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2) or m[0, 1] != m[1, 0]:
            raise ValueError("expected a symmetric 2x2 matrix")
        return cls(m[0, 0], m[0, 1], m[1, 1])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.k11, self.k12], [self.k12, self.k22]])

    @property
    def trace(self) -> float:
        return self.k11 + self.k22


def as_quad(vertices) -> np.ndarray:
    v = as_vertices(vertices)
    if v.shape[-2] != 4:
        raise GeometryError(f"expected 4 vertices, got {v.shape[-2]}")
    return v


def kappa_matrix(kappa) -> np.ndarray:
    """``(2, 2)`` matrix of a tensor, or pass through a ``(..., 2, 2)`` batch."""
    if isinstance(kappa, DiffusionTensor):
        return kappa.matrix
    return np.asarray(kappa, dtype=float)


def rotate_cw(v) -> np.ndarray:
    """Rotate vector(s) by 90 degrees clockwise: ``(x, y) -> (y, -x)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def diagonals(vertices) -> np.ndarray:
    """``d_i = V_{i+1} - V_{i-1}`` for every vertex of a polygon."""
    v = as_vertices(vertices)
    return np.roll(v, -1, axis=-2) - np.roll(v, 1, axis=-2)


def _symmetric(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def consistency_matrix(vertices, kappa) -> np.ndarray:
    """``A_ij = kappa d_j^perp . d_i^perp / (4 |P|)`` on any CCW polygon.

    Accepts a single polygon or a batch ``(..., N, 2)`` with a matching
    batch of ``kappa`` matrices.
    """
    v = as_vertices(vertices)
    area = np.asarray(ccw_area(v))
    dp = rotate_cw(diagonals(v))
    A = np.einsum("...ia,...ab,...jb->...ij", dp, kappa_matrix(kappa), dp)
    return _symmetric(A) / (4.0 * area[..., None, None])


def signed_triangle_areas(vertices) -> np.ndarray:
    """``T_i``: signed area of the triangle left after removing ``V_i``.

    The remaining vertices in increasing label order are a cyclic shift of
    ``(V_{i+1}, V_{i+2}, V_{i+3})``, so that triple gives the same sign.
    """
    v = as_quad(vertices)
    p1 = np.roll(v, -1, axis=-2)
    p2 = np.roll(v, -2, axis=-2)
    p3 = np.roll(v, -3, axis=-2)
    u, w = p2 - p1, p3 - p1
    return 0.5 * (u[..., 0] * w[..., 1] - u[..., 1] * w[..., 0])


def gamma_vector(vertices) -> np.ndarray:
    """``T_i' = (-1)^i T_i / |Q|``."""
    v = as_quad(vertices)
    area = np.asarray(ccw_area(v))
    return HOURGLASS_SIGNS * signed_triangle_areas(v) / area[..., None]


def stability_basis_matrix(vertices) -> np.ndarray:
    g = gamma_vector(vertices)
    return g[..., :, None] * g[..., None, :]


def transform_matrix(vertices) -> np.ndarray:
    """Rows ``1, x_i, y_i, (-1)^i/2`` mapping the basis to ``{1, x, y, Psi_h}``."""
    v = as_quad(vertices)
    if v.ndim != 2:
        raise GeometryError("transform_matrix takes a single quadrilateral")
    return np.vstack([np.ones(4), v[:, 0], v[:, 1], HOURGLASS_DOFS])


class GBCExpansion(NamedTuple):
    """``phi_i = a_i + b_i x + c_i y + t_i Psi_h`` with ``t_i = T_i'``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    t: np.ndarray

    def basis_values(self, x, y, psi) -> np.ndarray:
        return (
            self.a[:, None]
            + self.b[:, None] * np.atleast_1d(x)
            + self.c[:, None] * np.atleast_1d(y)
            + self.t[:, None] * np.atleast_1d(psi)
        )


def gbc_expansion(vertices) -> GBCExpansion:
    v = as_quad(vertices)
    if v.ndim != 2:
        raise GeometryError("gbc_expansion takes a single quadrilateral")
    area = ccw_area(v)
    if abs(np.linalg.det(transform_matrix(v))) <= 1e-14 * max(1.0, area):
        raise DegenerateGeometryError("singular basis transform")
    T = signed_triangle_areas(v)
    d = diagonals(v)
    nxt, prv = np.roll(v, -1, axis=0), np.roll(v, 1, axis=0)
    # T_i enters the constant term unsigned; checked against inv(transform_matrix)
    a = (T + (nxt[:, 0] * prv[:, 1] - prv[:, 0] * nxt[:, 1])) / (2.0 * area)
    b = d[:, 1] / (2.0 * area)
    c = -d[:, 0] / (2.0 * area)
    return GBCExpansion(a, b, c, HOURGLASS_SIGNS * T / area)


def element_stiffness(vertices, kappa, tau) -> np.ndarray:
    """``K = A + tau B``; ``tau`` may be a scalar or one value per quad of a batch."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    return consistency_matrix(vertices, kappa) + tau[..., None, None] * stability_basis_matrix(vertices)


@dataclass(frozen=True, eq=False)
class ElementDecomposition:
    A: np.ndarray
    B: np.ndarray
    gamma: np.ndarray
    C: np.ndarray
    area: float
    tau: float | None = None
    tau_source: str | None = None

    @property
    def K(self) -> np.ndarray:
        if self.tau is None:
            raise ValueError("no tau attached to this decomposition")
        return self.A + self.tau * self.B


def decompose(vertices, kappa: DiffusionTensor, tau=None, tau_source=None) -> ElementDecomposition:
    """Collect ``A``, ``B``, ``gamma`` and the block ``C`` of a quad.

    ``C`` here already carries the ``1/(4|Q|)`` factor so that
    ``A == [[C, -C], [-C, C]]`` holds literally.
    """
    v = as_quad(vertices)
    if v.ndim != 2:
        raise GeometryError("decompose takes a single quadrilateral")
    A = consistency_matrix(v, kappa)
    g = gamma_vector(v)
    return ElementDecomposition(
        A=A,
        B=np.outer(g, g),
        gamma=g,
        C=A[:2, :2].copy(),
        area=ccw_area(v),
        tau=tau,
        tau_source=tau_source,
    )
