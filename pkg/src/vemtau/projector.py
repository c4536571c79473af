"""Energy projection onto linear polynomials from vertex values only."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .decomposition import diagonals, rotate_cw
from .geometry import DegenerateGeometryError, as_vertices, ccw_area


class P0Choice(enum.Enum):
    """Projection onto constants used to fix the constant part."""

    VERTEX_MEAN = "vertex"
    BOUNDARY_MEAN = "boundary"


@dataclass(frozen=True)
class LinearPolynomial:
    """``a + b x + c y``."""

    a: float
    b: float
    c: float

    def __call__(self, x, y):
        return self.a + self.b * np.asarray(x) + self.c * np.asarray(y)

    def __add__(self, other: "LinearPolynomial") -> "LinearPolynomial":
        return LinearPolynomial(self.a + other.a, self.b + other.b, self.c + other.c)

    @property
    def gradient(self) -> np.ndarray:
        return np.array([self.b, self.c])

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


def vertex_center(vertices) -> np.ndarray:
    return as_vertices(vertices).mean(axis=-2)


def boundary_weights(vertices) -> np.ndarray:
    """Weights of the vertex values in the boundary mean of a piecewise-linear trace."""
    v = as_vertices(vertices)
    e = np.roll(v, -1, axis=-2) - v
    lengths = np.hypot(e[..., 0], e[..., 1])
    perimeter = lengths.sum(axis=-1, keepdims=True)
    if np.any(perimeter <= 0):
        raise DegenerateGeometryError("zero perimeter")
    return 0.5 * (np.roll(lengths, 1, axis=-1) + lengths) / perimeter


def boundary_centroid(vertices) -> np.ndarray:
    v = as_vertices(vertices)
    return np.einsum("...i,...ia->...a", boundary_weights(v), v)


def _p0_weights(v: np.ndarray, choice: P0Choice) -> np.ndarray:
    if choice is P0Choice.VERTEX_MEAN:
        return np.full(v.shape[:-1], 1.0 / v.shape[-2])
    if choice is P0Choice.BOUNDARY_MEAN:
        return boundary_weights(v)
    raise ValueError(f"unknown P0 choice {choice!r}")


def projection_matrix(vertices, choice: P0Choice = P0Choice.VERTEX_MEAN) -> np.ndarray:
    """``(3, N)`` map from vertex values to the coefficients ``(a, b, c)``.

    The gradient is the mean gradient ``(1/|P|) sum_i v_i d_i^perp / 2``;
    the constant is fixed so that the chosen P0 of the projection matches
    P0 of the data. Batches ``(..., N, 2)`` give ``(..., 3, N)``.
    """
    v = as_vertices(vertices)
    area = np.asarray(ccw_area(v))
    grad = np.swapaxes(rotate_cw(diagonals(v)), -1, -2) / (2.0 * area[..., None, None])
    w = _p0_weights(v, choice)
    p0x = np.einsum("...i,...ia->...a", w, v)
    const = w - np.einsum("...a,...ai->...i", p0x, grad)
    return np.concatenate([const[..., None, :], grad], axis=-2)


def project_nodal_function(
    vertices, nodal_values, choice: P0Choice = P0Choice.VERTEX_MEAN
) -> LinearPolynomial:
    v = as_vertices(vertices)
    values = np.asarray(nodal_values, dtype=float)
    if values.shape != (len(v),):
        raise ValueError(f"expected {len(v)} nodal values, got shape {values.shape}")
    a, b, c = projection_matrix(v, choice) @ values
    return LinearPolynomial(float(a), float(b), float(c))


def project_basis_function(
    vertices, i: int, choice: P0Choice = P0Choice.VERTEX_MEAN
) -> LinearPolynomial:
    v = as_vertices(vertices)
    if not 0 <= i < len(v):
        raise IndexError(f"vertex index {i} out of range for {len(v)} vertices")
    a, b, c = projection_matrix(v, choice)[:, i]
    return LinearPolynomial(float(a), float(b), float(c))


def residual_dofs(vertices, choice: P0Choice = P0Choice.VERTEX_MEAN) -> np.ndarray:
    """``D[k, i]``: value at vertex ``k`` of ``phi_i`` minus its projection."""
    v = as_vertices(vertices)
    area = np.asarray(ccw_area(v))
    grad = rotate_cw(diagonals(v)) / (2.0 * area[..., None, None])
    w = _p0_weights(v, choice)
    # (Pi phi_i)(V_k) = w_i + (V_k - P0 x) . grad_i, kept local to avoid cancellation
    local = v - np.einsum("...i,...ia->...a", w, v)[..., None, :]
    values = w[..., None, :] + local @ np.swapaxes(grad, -1, -2)
    return np.eye(v.shape[-2]) - values
