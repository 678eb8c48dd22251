"""Uniform 1-D grid, fields sampled on it, and the discrete operators.

A *field* is a plain ``numpy`` array whose last axis has length ``grid.M``;
leading axes index tree nodes so that every operator here works on a whole
tree level at once.  A *coefficient* is any callable ``f(t, x) -> array``
that broadcasts over ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError

Coefficient = Callable[[float, np.ndarray], "np.ndarray | float"]

MIN_NODES = 5


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``M`` nodes on ``[x_left, x_right]``, boundary included."""

    x_left: float
    x_right: float
    M: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_left) and np.isfinite(self.x_right)):
            raise ConfigurationError("grid endpoints must be finite")
        if not self.x_left < self.x_right:
            raise ConfigurationError(
                f"degenerate interval: x_left={self.x_left} must be < x_right={self.x_right}"
            )
        if int(self.M) != self.M or self.M < MIN_NODES:
            raise ConfigurationError(f"grid needs M >= {MIN_NODES} nodes, got {self.M}")

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / (self.M - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_left + self.h * np.arange(self.M)

    @property
    def midpoints(self) -> np.ndarray:
        return self.x_left + self.h * (np.arange(self.M - 1) + 0.5)

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.M, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


def make_grid(x_left: float, x_right: float, M: int) -> Grid:
    return Grid(float(x_left), float(x_right), int(M))


def sample(coef: Coefficient, t: float, x: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient on ``x`` and broadcast the result to ``x.shape``."""
    values = np.broadcast_to(np.asarray(coef(t, x), dtype=float), np.shape(x))
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite coefficient sample at t={t}")
    return values


def constant(value: float) -> Coefficient:
    """Coefficient that is identically ``value``."""
    value = float(value)

    def coef(t: float, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), value)

    coef.value = value  # type: ignore[attr-defined]
    return coef


def _check_finite(u: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(u)):
        raise NumericError(f"non-finite entries in {what}")


def apply_A(grid: Grid, a_diff: Coefficient, u: np.ndarray, t: float) -> np.ndarray:
    """Divergence-form second difference ``(a u_x)_x``, zero on boundary nodes.

    The diffusion coefficient is sampled at cell midpoints, which keeps the
    operator symmetric for the trapezoidal inner product on boundary-zero
    fields.
    """
    u = np.asarray(u, dtype=float)
    a_half = sample(a_diff, t, grid.midpoints)
    flux = a_half * np.diff(u, axis=-1)
    out = np.zeros_like(u)
    out[..., 1:-1] = (flux[..., 1:] - flux[..., :-1]) / grid.h**2
    return out


def gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Central differences inside, one-sided first order at the two ends."""
    u = np.asarray(u, dtype=float)
    _check_finite(u, "gradient input")
    h = grid.h
    out = np.empty_like(u)
    out[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2.0 * h)
    out[..., 0] = (u[..., 1] - u[..., 0]) / h
    out[..., -1] = (u[..., -1] - u[..., -2]) / h
    return out


def gradient_interior(grid: Grid, z: np.ndarray) -> np.ndarray:
    """Gradient of a field that is pinned to zero on the boundary nodes.

    Interior nodes next to the boundary use one-sided stencils that only touch
    interior values; the boundary entries of the result are zero.
    """
    z = np.asarray(z, dtype=float)
    h = grid.h
    out = np.zeros_like(z)
    out[..., 2:-2] = (z[..., 3:-1] - z[..., 1:-3]) / (2.0 * h)
    out[..., 1] = (z[..., 2] - z[..., 1]) / h
    out[..., -2] = (z[..., -2] - z[..., -3]) / h
    return out


def gradient_interior_matrix(grid: Grid) -> np.ndarray:
    """Dense matrix of :func:`gradient_interior` (used for adjoints)."""
    return gradient_interior(grid, np.eye(grid.M)).T


def gradient_interior_adjoint(grid: Grid, psi: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`gradient_interior` for the trapezoidal inner product.

    Satisfies ``l2_inner(gradient_interior(z), psi) == l2_inner(z, adjoint(psi))``
    for every ``z``, which makes it the discrete ``-d/dx`` in integration by parts.
    """
    w = grid.weights
    D = gradient_interior_matrix(grid)
    return (D.T @ (w * np.asarray(psi, dtype=float))) / w


def l2_inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float | np.ndarray:
    """Trapezoidal quadrature of ``integral f g dx`` over the last axis."""
    return np.sum(np.asarray(f) * np.asarray(g) * grid.weights, axis=-1)


def positive_part_defect(grid: Grid, f: np.ndarray) -> float | np.ndarray:
    """Trapezoidal quadrature of ``integral (f^+)^2 dx``."""
    fp = np.maximum(np.asarray(f, dtype=float), 0.0)
    return l2_inner(grid, fp, fp)


def weak_A(grid: Grid, a_diff: Coefficient, u: np.ndarray, psi: np.ndarray, t: float):
    """``<A u, psi>`` in flux form, ``-sum a_{i+1/2} du dpsi / h``.

    Equals ``l2_inner(apply_A(u), psi)`` exactly (summation by parts) when
    ``psi`` vanishes on the boundary.
    """
    a_half = sample(a_diff, t, grid.midpoints)
    return -np.sum(a_half * np.diff(u, axis=-1) * np.diff(psi, axis=-1), axis=-1) / grid.h
