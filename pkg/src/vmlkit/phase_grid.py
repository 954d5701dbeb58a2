"""Truncated phase-space discretization and spectral machinery.

Velocity space is a uniform tensor grid on [-v_max, v_max)^3 with node
coordinates t_i = -v_max + i*h, h = 2*v_max/n_v.  For even n_v the grid
contains v = 0 and is symmetric under v -> -v up to a one-cell offset
(the -v_max layer has no +v_max partner); all quadratures use the uniform
cell measure h^3, which on Maxwell-weighted integrands agrees with the
trapezoidal rule to below the Maxwellian tail mass.

Position space is a periodic torus of period ``box_length`` per axis.
Fields vary only along ``active_axes``; derivatives along inactive axes
vanish identically.  The discrete transform pair is normalized so that
the L^2(dx) Plancherel identity holds without extra factors:

    sum_k |fhat(k)|^2 = (L/n_x)^d * sum_x |f(x)|^2,   xi_k = 2*pi*k/L.

Fractional powers |xi|^s act as Fourier multipliers; the xi = 0 mode is
zeroed for negative exponents (torus surrogate of the homogeneous
negative-order Sobolev norm) and its content is reported separately by
the diagnostics layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Normalized global Maxwellian (2*pi)^(-3/2) exp(-|v|^2/2).

    ``v`` holds velocity vectors in its last axis (shape (..., 3)).
    """
    v = np.asarray(v, dtype=float)
    vsq = np.sum(v * v, axis=-1)
    return (TWO_PI) ** (-1.5) * np.exp(-0.5 * vsq)


@dataclass(frozen=True)
class WeightParams:
    """Parameters of the time-velocity weight <v>^(-(gamma+2)*ell) * exp(q<v>^2/(1+t)^theta).

    gamma : kernel exponent, soft-potential range [-3, -2)
    ell   : polynomial weight order (per-derivative order ell - |beta| is
            handled by the caller via ``with_ell``)
    q     : exponential strength, 0 <= q <= 0.1 (q = 0 is the degenerate
            weightless limit used in collapse tests)
    theta : time exponent; must satisfy theta <= s/2 for s in [1/2, 1]
            and theta <= s/2 - 1/2 for s in (1, 3/2)
    """

    gamma: float = -3.0
    ell: float = 0.0
    q: float = 0.0
    theta: float = 0.25

    def __post_init__(self):
        if not (-3.0 <= self.gamma < -2.0):
            raise ValueError(f"gamma must lie in [-3, -2), got {self.gamma}")
        if not (0.0 <= self.q <= 0.1):
            raise ValueError(f"q must lie in [0, 0.1], got {self.q}")
        if self.theta < 0.0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")

    def validate_for_s(self, s_exp: float) -> None:
        """Check the admissibility bracket tying theta to the regularity index s."""
        if not (0.5 <= s_exp < 1.5):
            raise ValueError(f"s must lie in [1/2, 3/2), got {s_exp}")
        if self.q == 0.0:
            return
        cap = 0.5 * s_exp if s_exp <= 1.0 else 0.5 * s_exp - 0.5
        if self.theta > cap + 1e-12:
            raise ValueError(
                f"theta={self.theta} violates the bracket theta <= {cap} for s={s_exp}"
            )

    def with_ell(self, ell: float) -> "WeightParams":
        return replace(self, ell=ell)


def weight_w(params: WeightParams, t: float, v: np.ndarray) -> np.ndarray:
    """Time-velocity weight w_ell(t, v) for velocity vectors v (shape (..., 3))."""
    if t < 0:
        raise ValueError("weight_w requires t >= 0")
    v = np.asarray(v, dtype=float)
    bsq = 1.0 + np.sum(v * v, axis=-1)  # <v>^2
    poly = bsq ** (-0.5 * (params.gamma + 2.0) * params.ell)
    if params.q == 0.0:
        return poly
    return poly * np.exp(params.q * bsq / (1.0 + t) ** params.theta)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform tensor velocity grid on [-v_max, v_max)^3 with cell quadrature."""

    v_max: float = 6.0
    n_v: int = 24

    def __post_init__(self):
        if self.n_v < 4:
            raise ValueError("n_v must be at least 4")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def nodes_1d(self) -> np.ndarray:
        return -self.v_max + self.spacing * np.arange(self.n_v)

    @property
    def shape(self) -> tuple:
        return (self.n_v,) * 3

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    # --- cached tensor fields -------------------------------------------------
    def axes(self):
        """Broadcastable per-axis coordinate arrays (v1, v2, v3)."""
        t = self.nodes_1d
        return (
            t[:, None, None],
            t[None, :, None],
            t[None, None, :],
        )

    def component(self, j: int) -> np.ndarray:
        return self.axes()[j]

    def vsq(self) -> np.ndarray:
        v1, v2, v3 = self.axes()
        return v1 * v1 + v2 * v2 + v3 * v3

    def vnorm(self) -> np.ndarray:
        return np.sqrt(self.vsq())

    def bracket(self, power: float = 1.0) -> np.ndarray:
        """<v>^power on the grid."""
        return (1.0 + self.vsq()) ** (0.5 * power)

    def mu(self) -> np.ndarray:
        return (TWO_PI) ** (-1.5) * np.exp(-0.5 * self.vsq())

    def mu_half(self) -> np.ndarray:
        return (TWO_PI) ** (-0.75) * np.exp(-0.25 * self.vsq())

    def mu_half_1d(self) -> np.ndarray:
        t = self.nodes_1d
        return (TWO_PI) ** (-0.25) * np.exp(-0.25 * t * t)

    def integrate(self, f: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
        """Cell-measure quadrature over the last three axes (or ``axes``)."""
        if axes is None:
            axes = (-3, -2, -1)
        return self.cell_volume * np.sum(f, axis=tuple(axes))

    def weight_field(self, params: WeightParams, t: float) -> np.ndarray:
        bsq = 1.0 + self.vsq()
        poly = bsq ** (-0.5 * (params.gamma + 2.0) * params.ell)
        if params.q == 0.0:
            return poly
        return poly * np.exp(params.q * bsq / (1.0 + t) ** params.theta)


def fd_gradient_matrix(nodes: np.ndarray) -> np.ndarray:
    """Second-order first-derivative matrix on a uniform 1-D grid.

    Central differences inside, one-sided three-point stencils at the two
    boundary rows.  Both stencil families are exact on quadratics, which
    the collision operator exploits to annihilate its null space to
    round-off.  Functions are treated as zero outside the grid only
    through the transpose (divergence) pairing.
    """
    n = len(nodes)
    h = nodes[1] - nodes[0]
    m = np.zeros((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5 / h
        m[i, i + 1] = 0.5 / h
    m[0, 0], m[0, 1], m[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    m[-1, -1], m[-1, -2], m[-1, -3] = 1.5 / h, -2.0 / h, 0.5 / h
    return m


def fd_gradient_matrix_o4(nodes: np.ndarray) -> np.ndarray:
    """Fourth-order first-derivative matrix, zero extension at the boundary.

    Used for the Lorentz-force velocity gradient where Maxwell-weighted
    decay makes the truncation at the box edge subdominant.
    """
    n = len(nodes)
    h = nodes[1] - nodes[0]
    m = np.zeros((n, n))
    c1, c2 = 8.0 / (12.0 * h), 1.0 / (12.0 * h)
    idx = np.arange(n)
    for off, c in ((-2, c2), (-1, -c1), (1, c1), (2, -c2)):
        rows = idx[(idx + off >= 0) & (idx + off < n)]
        m[rows, rows + off] = c
    return m


# ---------------------------------------------------------------------------
# spatial torus grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic torus grid; fields vary along ``active_axes`` only.

    The wavevector table is integer-indexed with xi = 2*pi*k/box_length,
    matching the exp(2*pi*i*k*x/L) transform convention, so spatial
    derivatives are multiplication by i*xi and |xi| feeds every fractional
    multiplier.
    """

    box_length: float = TWO_PI * 10.0
    n_x: int = 64
    active_axes: tuple = (0,)

    def __post_init__(self):
        if self.n_x < 2:
            raise ValueError("n_x must be at least 2")
        if len(self.active_axes) < 1 or any(a not in (0, 1, 2) for a in self.active_axes):
            raise ValueError("active_axes must be a nonempty subset of (0, 1, 2)")
        if len(set(self.active_axes)) != len(self.active_axes):
            raise ValueError("active_axes must not repeat")

    @property
    def n_active(self) -> int:
        return len(self.active_axes)

    @property
    def shape(self) -> tuple:
        return (self.n_x,) * self.n_active

    @property
    def dx(self) -> float:
        return self.box_length / self.n_x

    @property
    def cell_measure(self) -> float:
        return self.dx ** self.n_active

    def coords(self):
        """Broadcastable physical coordinates along each active axis."""
        x = self.dx * np.arange(self.n_x)
        out = []
        for i in range(self.n_active):
            sh = [1] * self.n_active
            sh[i] = self.n_x
            out.append(x.reshape(sh))
        return out

    def mode_numbers(self) -> np.ndarray:
        """Integer mode indices along one active axis (fft order)."""
        return np.fft.fftfreq(self.n_x, d=1.0 / self.n_x).astype(int)

    def xi_1d(self) -> np.ndarray:
        return TWO_PI * self.mode_numbers() / self.box_length

    def xi_mesh(self):
        """Broadcastable xi arrays, one per active axis."""
        xi = self.xi_1d()
        out = []
        for i in range(self.n_active):
            sh = [1] * self.n_active
            sh[i] = self.n_x
            out.append(xi.reshape(sh))
        return out

    def xi_norm(self) -> np.ndarray:
        mesh = self.xi_mesh()
        acc = np.zeros(self.shape)
        for m in mesh:
            acc = acc + m * m
        return np.sqrt(acc)

    def xi_component(self, axis: int) -> np.ndarray:
        """xi along a *global* axis index; zero array if the axis is inactive."""
        if axis in self.active_axes:
            return np.broadcast_to(
                self.xi_mesh()[self.active_axes.index(axis)], self.shape
            ).copy()
        return np.zeros(self.shape)

    # --- transforms -----------------------------------------------------------
    def _x_axes(self, arr: np.ndarray, x_axes) -> tuple:
        if x_axes is None:
            return tuple(range(arr.ndim - self.n_active, arr.ndim))
        return tuple(x_axes)

    def forward(self, arr: np.ndarray, x_axes=None) -> np.ndarray:
        """Unitary (Plancherel with the dx measure) forward transform."""
        axes = self._x_axes(arr, x_axes)
        scale = (np.sqrt(self.box_length) / self.n_x) ** len(axes)
        return np.fft.fftn(arr, axes=axes) * scale

    def inverse(self, arr: np.ndarray, x_axes=None) -> np.ndarray:
        axes = self._x_axes(arr, x_axes)
        scale = (self.n_x / np.sqrt(self.box_length)) ** len(axes)
        return np.fft.ifftn(arr, axes=axes) * scale

    def inverse_real(self, arr: np.ndarray, x_axes=None) -> np.ndarray:
        return self.inverse(arr, x_axes).real

    def _mult_view(self, mult: np.ndarray, arr_ndim: int, axes: tuple) -> np.ndarray:
        """Reshape an x-shaped multiplier to broadcast against ``arr``."""
        sh = [1] * arr_ndim
        for i, ax in enumerate(axes):
            sh[ax] = mult.shape[i]
        return mult.reshape(sh)

    def apply_multiplier(self, spec: np.ndarray, mult: np.ndarray, x_axes=None) -> np.ndarray:
        axes = self._x_axes(spec, x_axes)
        return spec * self._mult_view(np.asarray(mult), spec.ndim, axes)

    def derivative(self, arr: np.ndarray, axis: int, x_axes=None, spectral_in=False,
                   spectral_out=False) -> np.ndarray:
        """d/dx_axis for a global axis index; identically zero off the active set."""
        if axis not in self.active_axes:
            return np.zeros_like(arr) if spectral_in == spectral_out else np.zeros(
                arr.shape, dtype=complex if spectral_out else float)
        spec = arr if spectral_in else self.forward(arr, x_axes)
        mult = 1j * self.xi_component(axis)
        out = self.apply_multiplier(spec, mult, x_axes if spectral_in else self._x_axes(arr, x_axes))
        if spectral_out:
            return out
        return self.inverse(out, self._x_axes(arr, x_axes)).real

    # --- fractional multipliers -------------------------------------------------
    def lambda_multiplier(self, s_exp: float) -> np.ndarray:
        """|xi|^s table with the documented xi = 0 policy."""
        xin = self.xi_norm()
        mult = np.zeros(self.shape)
        nz = xin > 0
        mult[nz] = xin[nz] ** s_exp
        if s_exp == 0.0:
            mult[~nz] = 1.0  # identity passes the mean through
        return mult

    def lambda_s_apply(self, f: np.ndarray, s_exp: float, x_axes=None,
                       spectral_in=False, spectral_out=False) -> np.ndarray:
        """Apply the fractional operator |xi|^s as a Fourier multiplier."""
        axes = self._x_axes(f, x_axes)
        spec = f if spectral_in else self.forward(f, x_axes)
        out = self.apply_multiplier(spec, self.lambda_multiplier(s_exp), axes)
        if spectral_out:
            return out
        return self.inverse(out, axes).real

    # --- norms ------------------------------------------------------------------
    def spec_weighted_norm2(self, spec: np.ndarray, mult: np.ndarray | None = None,
                            x_axes=None, cell_measure: float = 1.0) -> float:
        """sum over everything of mult * |spec|^2, non-x axes carrying ``cell_measure``."""
        axes = self._x_axes(spec, x_axes)
        p = np.abs(spec) ** 2
        if mult is not None:
            p = p * self._mult_view(np.asarray(mult), spec.ndim, axes)
        return float(np.sum(p)) * cell_measure

    def norm2(self, arr: np.ndarray, x_axes=None, cell_measure: float = 1.0) -> float:
        """Physical-space L^2 squared norm with the dx (and optional extra) measure."""
        return float(np.sum(np.abs(arr) ** 2)) * self.cell_measure * cell_measure


def fourier_forward(grid: SpatialGrid, f: np.ndarray, x_axes=None) -> np.ndarray:
    """Unitary forward transform over the grid's spatial axes."""
    return grid.forward(f, x_axes)


def fourier_inverse(grid: SpatialGrid, spec: np.ndarray, x_axes=None) -> np.ndarray:
    """Inverse of ``fourier_forward``; real part is the physical field."""
    return grid.inverse(spec, x_axes)


def lambda_s_apply(grid: SpatialGrid, f: np.ndarray, s_exp: float,
                   x_axes=None) -> np.ndarray:
    """Fractional multiplier |xi|^s applied in physical space."""
    return grid.lambda_s_apply(f, s_exp, x_axes)


def sobolev_norms(grid: SpatialGrid, f: np.ndarray, s_exp: float, n: int,
                  x_axes=None, cell_measure: float = 1.0) -> tuple:
    """(homogeneous H^{-s} norm, full H^n norm) of a field.

    The H^{-s} part excludes the xi = 0 mode (torus convention); the H^n
    part is the multiplier sum_{j<=n} |xi|^{2j}.  Non-spatial axes are
    summed with ``cell_measure`` (the velocity cell volume for
    distributions, 1 for electromagnetic fields).
    """
    if n < 0:
        raise ValueError("derivative order n must be nonnegative")
    spec = grid.forward(f, x_axes)
    m_neg = grid.lambda_multiplier(-s_exp) ** 2
    hneg = np.sqrt(grid.spec_weighted_norm2(spec, m_neg, x_axes, cell_measure))
    xin2 = grid.xi_norm() ** 2
    m_n = np.ones(grid.shape)
    acc = np.ones(grid.shape)
    for _ in range(n):
        acc = acc * xin2
        m_n = m_n + acc
    hn = np.sqrt(grid.spec_weighted_norm2(spec, m_n, x_axes, cell_measure))
    return hneg, hn


# ---------------------------------------------------------------------------
# distribution pairs
# ---------------------------------------------------------------------------

PHYSICAL = "physical"
SPECTRAL = "spectral"


@dataclass
class DistributionPair:
    """Two-species perturbation f = [f_plus, f_minus] on the x*v grid.

    values has shape (2, *x_shape, n_v, n_v, n_v); ``rep`` records whether
    the x axes are in physical or Fourier representation.
    """

    values: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        if self.values.shape[0] != 2:
            raise ValueError("DistributionPair expects a leading species axis of size 2")
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation {self.rep!r}")

    def x_axes(self, grid: SpatialGrid) -> tuple:
        return tuple(range(1, 1 + grid.n_active))

    def to_spectral(self, grid: SpatialGrid) -> "DistributionPair":
        if self.rep == SPECTRAL:
            return self
        return DistributionPair(grid.forward(self.values, self.x_axes(grid)), SPECTRAL)

    def to_physical(self, grid: SpatialGrid) -> "DistributionPair":
        if self.rep == PHYSICAL:
            return self
        vals = grid.inverse(self.values, self.x_axes(grid))
        return DistributionPair(vals.real, PHYSICAL)

    def copy(self) -> "DistributionPair":
        return DistributionPair(self.values.copy(), self.rep)


def check_finite(arr: np.ndarray, label: str = "field") -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite entries detected in {label}")
