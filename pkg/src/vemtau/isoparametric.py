"""Bilinear isoparametric quadrilateral, evaluated by Gauss quadrature.

This is the direct route to the element stiffness and to the hourglass
energy; it shares no code with :mod:`vemtau.decomposition` beyond the input
types, so the two can be checked against each other.

Reference vertex order: V1=(-1,-1), V2=(1,-1), V3=(1,1), V4=(-1,1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .decomposition import DiffusionTensor, as_quad, kappa_matrix
from .geometry import GeometryError

REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class InvalidMapError(GeometryError):
    """Nonpositive Jacobian determinant at a quadrature point."""


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (m, 2) in [-1, 1]^2
    weights: np.ndarray  # (m,)

    @property
    def order(self) -> int:
        return int(round(math.sqrt(len(self.weights))))


@lru_cache(maxsize=None)
def gauss_rule(n: int = 2) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule with ``n`` points per direction."""
    if n < 1:
        raise ValueError("need at least one point per direction")
    x, w = np.polynomial.legendre.leggauss(n)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


def bilinear_shapes(xi, eta):
    """Shape values ``N`` with shape ``(..., 4)`` and reference gradients ``(..., 4, 2)``."""
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    sx, sy = REF_CORNERS[:, 0], REF_CORNERS[:, 1]
    N = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dN = np.stack([0.25 * sx * (1 + sy * eta), 0.25 * sy * (1 + sx * xi)], axis=-1)
    return N, dN


def hourglass_shape(xi, eta):
    """Pullback of the hourglass mode: ``-xi*eta/2`` and its reference gradient."""
    xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
    return -0.5 * xi * eta, np.stack([-0.5 * eta, -0.5 * xi], axis=-1)


@dataclass(frozen=True, eq=False)
class ReferenceMapEval:
    x: np.ndarray  # (..., m, 2)
    jacobian: np.ndarray  # (..., m, 2, 2), J[a, b] = d x_b / d xi_a
    det: np.ndarray  # (..., m)


def reference_map(vertices, points) -> ReferenceMapEval:
    """Bilinear map of quad(s) ``(..., 4, 2)`` evaluated at reference points ``(m, 2)``."""
    v = as_quad(vertices)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    N, dN = bilinear_shapes(pts[:, 0], pts[:, 1])
    origin = v[..., :1, :]
    local = v - origin
    J = np.einsum("mia,...ib->...mab", dN, local)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return ReferenceMapEval(origin + np.einsum("mi,...ia->...ma", N, local), J, det)


def _physical_gradients(vertices, rule: QuadratureRule, ref_grads: np.ndarray):
    """Map reference gradients ``(m, k, 2)`` to physical ones; also returns ``w * detJ``."""
    ev = reference_map(vertices, rule.points)
    if np.any(ev.det <= 0):
        raise InvalidMapError("bilinear map has nonpositive Jacobian at a quadrature point")
    J = ev.jacobian
    Jinv = np.stack(
        [np.stack([J[..., 1, 1], -J[..., 0, 1]], -1), np.stack([-J[..., 1, 0], J[..., 0, 0]], -1)],
        -2,
    ) / ev.det[..., None, None]
    # grad_xi = J grad_x, hence grad_x = J^{-1} grad_xi
    grads = np.einsum("...mab,mkb->...mka", Jinv, ref_grads)
    return grads, rule.weights * ev.det


def fem_stiffness(vertices, kappa, rule: QuadratureRule | None = None) -> np.ndarray:
    """``K_ij = sum_q w_q detJ_q kappa grad N_j . grad N_i`` for one quad or a batch."""
    rule = rule or gauss_rule(2)
    _, dN = bilinear_shapes(rule.points[:, 0], rule.points[:, 1])
    G, wd = _physical_gradients(vertices, rule, dN)
    kG = np.einsum("...ab,...mjb->...mja", kappa_matrix(kappa), G)
    K = np.einsum("...m,...mia,...mja->...ij", wd, G, kG)
    return 0.5 * (K + np.swapaxes(K, -1, -2))


def hourglass_energy(vertices, kappa, rule: QuadratureRule | None = None):
    """``tau = integral of kappa grad Psi_h . grad Psi_h`` over the quad(s)."""
    rule = rule or gauss_rule(2)
    _, dpsi = hourglass_shape(rule.points[:, 0], rule.points[:, 1])
    G, wd = _physical_gradients(vertices, rule, dpsi[:, None, :])
    g = G[..., 0, :]
    tau = np.einsum("...m,...ma,...ab,...mb->...", wd, g, kappa_matrix(kappa), g)
    return float(tau) if tau.ndim == 0 else tau


def tau_rectangle(a: float, b: float, kappa: DiffusionTensor) -> float:
    """Hourglass energy on ``[0, a] x [0, b]``."""
    if a <= 0 or b <= 0:
        raise ValueError("side lengths must be positive")
    return (b * b * kappa.k11 + a * a * kappa.k22) / (3.0 * a * b)


def tau_parallelogram(a: float, b: float, theta: float, kappa: DiffusionTensor) -> float:
    """Hourglass energy on a parallelogram with side ``a`` along the x axis.

    ``theta`` is the angle (radians) between side ``a`` and side ``b``.
    """
    if a <= 0 or b <= 0:
        raise ValueError("side lengths must be positive")
    if not 0 < theta < math.pi:
        raise ValueError("theta must lie in (0, pi)")
    s, c = math.sin(theta), math.cos(theta)
    k11, k12, k22 = kappa.k11, kappa.k12, kappa.k22
    return (a * a * k22 + b * b * k11) / (3 * a * b * s) + b * (
        (k22 - k11) * c * c - 2 * k12 * c * s
    ) / (3 * a * s)


def parallelogram_vertices(a: float, b: float, theta: float, origin=(0.0, 0.0)) -> np.ndarray:
    ox, oy = origin
    bx, by = b * math.cos(theta), b * math.sin(theta)
    return np.array([[ox, oy], [ox + a, oy], [ox + a + bx, oy + by], [ox + bx, oy + by]])
