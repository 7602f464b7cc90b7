"""Finite-volume operators on the cell-centered grid with zero-flux boundaries.

All functions take plain ``(nx, ny)`` arrays plus the :class:`GridSpec`.
Boundary faces carry zero flux, which is the mirror-ghost-cell treatment of
homogeneous Neumann conditions; every face difference is added to one cell
and subtracted from its neighbour so the discrete integral telescopes.
"""
from __future__ import annotations

import numpy as np

from .core import GridSpec, ModelParams, first_index
from .errors import MisuseError, PositivityError, ShapeError


def _check_shape(phi: np.ndarray, grid: GridSpec, name: str = "field") -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != grid.shape:
        raise ShapeError(f"{name} has shape {phi.shape}, grid is {grid.shape}")
    return phi


def _check_positive_v(v: np.ndarray) -> None:
    bad = ~(v > 0)
    if np.any(bad):
        raise PositivityError("v must be strictly positive", first_index(bad))


def laplacian_neumann(phi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """5-point Laplacian with zero boundary flux."""
    phi = _check_shape(phi, grid)
    out = np.zeros_like(phi)
    fx = (phi[1:, :] - phi[:-1, :]) * (1.0 / grid.hx**2)
    out[:-1, :] += fx
    out[1:, :] -= fx
    fy = (phi[:, 1:] - phi[:, :-1]) * (1.0 / grid.hy**2)
    out[:, :-1] += fy
    out[:, 1:] -= fy
    return out


def motility_potential(u: np.ndarray, v: np.ndarray, p: ModelParams) -> np.ndarray:
    """Pointwise ``u (u + eps)^(m-1) v^-alpha``; equals ``u^m / v^alpha`` at eps = 0."""
    return u * np.power(u + p.eps, p.m - 1.0) * np.power(v, -p.alpha)


def motility_flux_divergence(u: np.ndarray, v: np.ndarray, grid: GridSpec, p: ModelParams) -> np.ndarray:
    """Discrete ``Lap(u (u + eps)^(m-1) v^-alpha)``."""
    u = _check_shape(u, grid, "u")
    v = _check_shape(v, grid, "v")
    _check_positive_v(v)
    return laplacian_neumann(motility_potential(u, v, p), grid)


def regularization_divergence(u: np.ndarray, grid: GridSpec, p: ModelParams) -> np.ndarray:
    """Discrete ``eps * Lap((u + 1)^M)``; only defined for the regularized system."""
    if not p.eps > 0:
        raise MisuseError("regularization_divergence requires eps > 0")
    if p.cap_m is None or p.cap_m <= p.m:
        raise MisuseError("regularization_divergence requires cap_m > m")
    u = _check_shape(u, grid, "u")
    return p.eps * laplacian_neumann(np.power(u + 1.0, p.cap_m), grid)


def grad_sq_integral(phi: np.ndarray, grid: GridSpec) -> float:
    """Discrete Dirichlet form: sum over interior faces of (difference/spacing)^2 * cell_area.

    Boundary faces contribute nothing, so this equals
    ``sum(phi * -laplacian_neumann(phi)) * cell_area`` up to round-off.
    """
    phi = _check_shape(phi, grid)
    gx = (phi[1:, :] - phi[:-1, :]) / grid.hx
    gy = (phi[:, 1:] - phi[:, :-1]) / grid.hy
    return float(np.sum(gx * gx) + np.sum(gy * gy)) * grid.cell_area


def weighted_power_integral(u: np.ndarray, v: np.ndarray, p_exp: float, a_exp: float,
                            grid: GridSpec) -> float:
    """Quadrature of ``u^p_exp * v^-a_exp`` over the domain."""
    u = _check_shape(u, grid, "u")
    v = _check_shape(v, grid, "v")
    _check_positive_v(v)
    return float(np.sum(np.power(u, p_exp) * np.power(v, -a_exp))) * grid.cell_area


def integral(phi: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(phi)) * grid.cell_area


def discrete_eigenvalue(n: int, length: float, mode: int = 1) -> float:
    """Eigenvalue of the 1D Neumann stencil for ``cos(mode*pi*x/length)``."""
    h = length / n
    return -(2.0 / h**2) * (1.0 - np.cos(mode * np.pi * h / length))
