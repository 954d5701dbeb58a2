"""Spectral electromagnetic fields, Maxwell source terms, and constraints.

E and B are stored spectrally (canonical representation); curl and
divergence are exact Fourier multipliers, so d(div B)/dt = 0 holds to
round-off in the linear update and the Gauss-law drift is purely a
time-splitting effect.

The reformulated field equations driven by the perturbation pair are

    dE/dt =  curl B - int v mu^(1/2) (f_+ - f_-) dv
    dB/dt = -curl E

with the compatibility constraints div E = a_+ - a_- and div B = 0.  On
the torus the zero mode of the charge a_+ - a_- must vanish (no periodic
solution of Gauss's law exists for a net charge), which the initializer
enforces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phase_grid import SpatialGrid, VelocityGrid


@dataclass
class EMField:
    """Electromagnetic pair in spectral representation, shapes (3, *grid.shape)."""

    e_spec: np.ndarray
    b_spec: np.ndarray

    def copy(self) -> "EMField":
        return EMField(self.e_spec.copy(), self.b_spec.copy())

    def e_phys(self, grid: SpatialGrid) -> np.ndarray:
        return grid.inverse(self.e_spec).real

    def b_phys(self, grid: SpatialGrid) -> np.ndarray:
        return grid.inverse(self.b_spec).real

    @staticmethod
    def zero(grid: SpatialGrid) -> "EMField":
        shape = (3,) + grid.shape
        return EMField(np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex))

    @staticmethod
    def from_physical(grid: SpatialGrid, e: np.ndarray, b: np.ndarray) -> "EMField":
        return EMField(grid.forward(e), grid.forward(b))


def _xi_components(grid: SpatialGrid):
    return [grid.xi_component(axis) for axis in range(3)]


def curl_spec(grid: SpatialGrid, x: np.ndarray) -> np.ndarray:
    xi = _xi_components(grid)
    out = np.empty_like(x)
    out[0] = 1j * (xi[1] * x[2] - xi[2] * x[1])
    out[1] = 1j * (xi[2] * x[0] - xi[0] * x[2])
    out[2] = 1j * (xi[0] * x[1] - xi[1] * x[0])
    return out


def div_spec(grid: SpatialGrid, x: np.ndarray) -> np.ndarray:
    xi = _xi_components(grid)
    return 1j * (xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2])


def charge_density(vgrid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """a_+ - a_- source: int mu^(1/2) (f_+ - f_-) dv on the x grid."""
    mu_half = vgrid.mu_half()
    return vgrid.integrate((f[0] - f[1]) * mu_half)


def current_density(vgrid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """j = int v mu^(1/2) (f_+ - f_-) dv; shape (3, *x_shape)."""
    mu_half = vgrid.mu_half()
    diff = f[0] - f[1]
    v1, v2, v3 = vgrid.axes()
    return np.stack([
        vgrid.integrate(diff * ((v1 + 0 * mu_half) * mu_half)),
        vgrid.integrate(diff * ((v2 + 0 * mu_half) * mu_half)),
        vgrid.integrate(diff * ((v3 + 0 * mu_half) * mu_half)),
    ])


def field_rhs(grid: SpatialGrid, em: EMField, current_spec: np.ndarray):
    """(dE/dt, dB/dt) in spectral space from the current source."""
    if current_spec.shape != em.e_spec.shape:
        raise ValueError("current and field shapes do not match the grid")
    de = curl_spec(grid, em.b_spec) - current_spec
    db = -curl_spec(grid, em.e_spec)
    return de, db


def gauss_residual(grid: SpatialGrid, em: EMField, rho_spec: np.ndarray) -> float:
    """L2 norm of div E - (a_+ - a_-)."""
    res = div_spec(grid, em.e_spec) - rho_spec
    return float(np.sqrt(np.sum(np.abs(res) ** 2)))


def div_b_norm(grid: SpatialGrid, em: EMField) -> float:
    return float(np.sqrt(np.sum(np.abs(div_spec(grid, em.b_spec)) ** 2)))


def make_compatible(grid: SpatialGrid, em_guess: EMField, rho_spec: np.ndarray,
                    neutrality_tol: float = 1e-10) -> EMField:
    """Project a field guess onto the Gauss-law and div B = 0 constraints.

    The longitudinal part of E is replaced mode-by-mode by the Poisson
    solution -i xi rho / |xi|^2; B loses its longitudinal component.  A
    nonzero charge zero mode is rejected: the torus requires global
    neutrality.
    """
    zero_idx = (0,) * grid.n_active
    rho0 = abs(rho_spec[zero_idx])
    scale = max(float(np.max(np.abs(rho_spec))), 1.0)
    if rho0 > neutrality_tol * scale:
        raise ValueError(
            f"net charge mode {rho0:.3e} violates torus neutrality; "
            "shift the species densities before initializing fields"
        )

    xi = _xi_components(grid)
    xin2 = np.zeros(grid.shape)
    for m in xi:
        xin2 = xin2 + m * m
    safe = np.where(xin2 > 0.0, xin2, 1.0)

    e = em_guess.e_spec.copy()
    xi_dot_e = xi[0] * e[0] + xi[1] * e[1] + xi[2] * e[2]
    for a in range(3):
        long_old = xi[a] * xi_dot_e / safe
        long_new = -1j * xi[a] * rho_spec / safe
        e[a] = np.where(xin2 > 0.0, e[a] - long_old + long_new, e[a])

    b = em_guess.b_spec.copy()
    xi_dot_b = xi[0] * b[0] + xi[1] * b[1] + xi[2] * b[2]
    for a in range(3):
        b[a] = np.where(xin2 > 0.0, b[a] - xi[a] * xi_dot_b / safe, b[a])

    return EMField(e, b)


def field_energy(em: EMField) -> float:
    """||E||^2 + ||B||^2 (Plancherel, spectral sum)."""
    return float(np.sum(np.abs(em.e_spec) ** 2) + np.sum(np.abs(em.b_spec) ** 2))
