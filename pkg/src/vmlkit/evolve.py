"""Time integration of the perturbative two-species system.

The reformulated equations advanced here, for f = [f_+, f_-], q0 =
diag(1, -1), q1 = [1, -1]:

    d_t f + v . grad_x f + q0 (E + v x B) . grad_v f - E . v mu^(1/2) q1
        + L f = (q0/2) E . v f + Gamma(f, f)
    d_t E = curl B - int v mu^(1/2) (f_+ - f_-) dv
    d_t B = -curl E

In linearized mode the force and quadratic terms ((E+vxB).grad_v f,
(q0/2) E.v f, Gamma) are dropped.

One step is the Strang palindrome

    transport(dt/2) field+force(dt/2) collision(dt) field+force(dt/2)
    transport(dt/2)

with an exact spectral phase shift for transport, explicit midpoint for
the field/force stage, and implicit trapezoid for the collision substep.
The trapezoid system (I + dt/2 L) f' = (I - dt/2 L) f is solved either by
preconditioned conjugate gradients (matrix-free, any resolution) or by a
cached dense propagator (small velocity grids); since L is symmetric
positive semidefinite the trapezoid update never increases ||f||^2, which
is what the per-step Lyapunov monitor leans on.

The species sum s = f_+ + f_- and difference d = f_+ - f_- diagonalize L
(L s = 2(A+K)s, L d = 2A d), so the collision solve runs on two decoupled
scalar systems batched over space.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg as sla

from . import landau, macro_micro, maxwell
from .phase_grid import (
    SpatialGrid,
    VelocityGrid,
    WeightParams,
    fd_gradient_matrix_o4,
)

CKPT_MAGIC = b"VMLCKPT1"
CKPT_VERSION = 1

LINEARIZED = "linearized"
NONLINEAR = "nonlinear"

PRESETS = ("zero", "relaxation", "vacuum-maxwell", "broadband")


class NanAbort(RuntimeError):
    """Raised when non-finite values appear; carries the last good state."""

    def __init__(self, step: int, t: float, last_good):
        super().__init__(f"non-finite state detected at step {step}, t = {t:.6g}")
        self.step = step
        self.t = t
        self.last_good = last_good


@dataclass
class RunConfig:
    """Fully resolved run parameters (the manifest mirrors this flat set)."""

    # grids
    n_x: int = 64
    box_length: float = 2.0 * math.pi * 100.0
    active_axes: tuple = (0,)
    n_v: int = 16
    v_max: float = 6.0
    # physics
    gamma: float = -3.0
    s_exp: float = 0.5
    q: float = 0.01
    theta: float = 0.25
    ell: float = 5.0          # weight order l of the big weighted family
    ell0: float = 2.0         # weight order l_0 of the top-index family
    lprime: float = 1.0       # free auxiliary order l'; l* = l' + (n0-1)/2
    eps0: float = 0.1         # free exponent of the a priori functional
    # integrator
    dt: float = 0.05
    t_end: float = 5.0
    mode: str = LINEARIZED
    collision_solver: str = "auto"   # auto | direct | cg
    cg_tol: float = 1e-12
    direct_max_nv: int = 16
    # initial data
    preset: str = "broadband"
    amplitude: float = 1e-3
    seed: int = 7
    n_modes: int = 20
    asym_fraction: float = 0.15  # species-asymmetric (charge/current) content
    micro_fraction: float = 0.2   # microscopic v-shape content
    b_fraction: float = 0.05      # magnetic seed relative to the f amplitude
    couple_fields: bool = True   # False: pure Maxwell sub-integrator (vacuum tests)
    # diagnostics
    n_max: int = 3            # N of the unweighted energy family
    n0: int = 3               # N_0 of the top-index family
    k_max: int = 1            # E^k reported for k = 0..k_max
    beta_max: int = 2         # velocity-derivative depth of weighted sums
    report_every: int = 10    # steps between full functional reports
    monitor_every: int = 1    # steps between lightweight Lyapunov rows (0 = off)
    checkpoint_every: int = 0  # steps between checkpoints (0 = final only)

    def __post_init__(self):
        if isinstance(self.active_axes, list):
            object.__setattr__(self, "active_axes", tuple(self.active_axes))

    @property
    def lstar(self) -> float:
        return self.lprime + 0.5 * (self.n0 - 1)

    def weight_params(self, ell: float | None = None) -> WeightParams:
        return WeightParams(gamma=self.gamma, ell=self.ell if ell is None else ell,
                            q=self.q, theta=self.theta)

    def validate(self) -> None:
        if self.mode not in (LINEARIZED, NONLINEAR):
            raise ValueError(f"mode must be linearized or nonlinear, got {self.mode!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("dt must be positive and t_end nonnegative")
        if not (0.5 <= self.s_exp < 1.5):
            raise ValueError(f"s_exp must lie in [1/2, 3/2), got {self.s_exp}")
        if self.k_max > max(self.n0 - 2, 0):
            raise ValueError(
                f"k_max={self.k_max} exceeds n0-2={self.n0 - 2}; decay theory "
                "indexes E^k only up to N0-2")
        if self.collision_solver not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown collision solver {self.collision_solver!r}")
        self.weight_params().validate_for_s(self.s_exp)

    def grids(self):
        sgrid = SpatialGrid(box_length=self.box_length, n_x=self.n_x,
                            active_axes=tuple(self.active_axes))
        vgrid = VelocityGrid(v_max=self.v_max, n_v=self.n_v)
        return sgrid, vgrid

    def as_flat_dict(self) -> dict:
        d = asdict(self)
        d["active_axes"] = ",".join(str(a) for a in self.active_axes)
        return d


_CONFIG_TYPES = None


def _config_types() -> dict:
    global _CONFIG_TYPES
    if _CONFIG_TYPES is None:
        import dataclasses

        _CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    return _CONFIG_TYPES


def config_from_mapping(mapping: dict) -> RunConfig:
    """Build a RunConfig from string-or-typed values, rejecting unknown keys."""
    types = _config_types()
    kwargs = {}
    for key, raw in mapping.items():
        if key not in types:
            raise KeyError(key)
        kind = types[key]
        if isinstance(raw, str):
            if key == "active_axes":
                val = tuple(int(tok) for tok in raw.replace(",", " ").split())
            elif kind in ("bool", bool):
                low = raw.strip().lower()
                if low in ("true", "1", "yes", "on"):
                    val = True
                elif low in ("false", "0", "no", "off"):
                    val = False
                else:
                    raise ValueError(f"{key}: expected a boolean, got {raw!r}")
            elif kind in ("int", int):
                val = int(raw)
            elif kind in ("float", float):
                val = float(raw)
            else:
                val = raw
        else:
            val = tuple(raw) if key == "active_axes" else raw
        kwargs[key] = val
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


@dataclass
class PhaseState:
    """Simulation state: physical-space pair f, spectral EM field, time."""

    f: np.ndarray             # (2, *x_shape, n_v, n_v, n_v) real
    em: maxwell.EMField
    t: float = 0.0

    def copy(self) -> "PhaseState":
        return PhaseState(self.f.copy(), self.em.copy(), self.t)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def _v_profiles(vgrid: VelocityGrid):
    mu_half = vgrid.mu_half()
    v1, v2, v3 = vgrid.axes()
    zero = np.zeros_like(mu_half)
    return [
        mu_half,
        (v1 + zero) * mu_half,
        (vgrid.vsq() - 3.0) * mu_half,
        (v1 * v2 + zero) * mu_half,          # microscopic shape
        (v3 + zero) * (vgrid.vsq() - 5.0) * mu_half,  # microscopic shape
    ]


def initial_state(config: RunConfig, sgrid: SpatialGrid, vgrid: VelocityGrid) -> PhaseState:
    """Construct preset initial data with compatible fields."""
    shape = (2,) + sgrid.shape + vgrid.shape
    f = np.zeros(shape)
    em = maxwell.EMField.zero(sgrid)
    rng = np.random.default_rng(config.seed)
    amp = config.amplitude

    if config.preset == "zero":
        pass

    elif config.preset == "relaxation":
        # x-homogeneous microscopic bump: pure -L relaxation once fields stay zero
        mu_half = vgrid.mu_half()
        v1, v2, v3 = vgrid.axes()
        bump = (v1 * v2 + 0.5 * v2 * v3 + 0 * mu_half) * mu_half
        for s in range(2):
            f[s] = amp * bump  # same in both species: charge-neutral, current-free

    elif config.preset == "vacuum-maxwell":
        # transverse traveling wave e_y = b_z = amp cos(xi x); real fields need
        # Hermitian spectra, so both +-k0 coefficients carry the same value
        e = np.zeros((3,) + sgrid.shape, dtype=complex)
        b = np.zeros_like(e)
        k0 = 2
        coeff = 0.5 * amp * sgrid.n_x / math.sqrt(sgrid.box_length)
        idx = [0] * sgrid.n_active
        for sgn in (k0, -k0):
            idx[0] = sgn
            e[(1,) + tuple(idx)] = coeff
            b[(2,) + tuple(idx)] = coeff
        em = maxwell.EMField(e, b)

    elif config.preset == "broadband":
        # flat low-mode spectrum; the species-symmetric macroscopic content
        # dominates so the slowly decaying hydrodynamic branch is populated,
        # with tunable charge-asymmetric and microscopic admixtures
        coords = sgrid.coords()
        x0 = coords[0]
        profiles = _v_profiles(vgrid)
        micro_idx = (3, 4)
        kmax = min(config.n_modes, sgrid.n_x // 3)
        xi0 = 2.0 * math.pi / sgrid.box_length
        fx = np.zeros((2,) + sgrid.shape + (len(profiles),))
        for k in range(1, kmax + 1):
            for p in range(len(profiles)):
                base = rng.uniform(0.5, 1.0) * np.cos(
                    xi0 * k * x0 + rng.uniform(0.0, 2.0 * math.pi))
                asym = config.asym_fraction * rng.uniform(0.5, 1.0) * np.cos(
                    xi0 * k * x0 + rng.uniform(0.0, 2.0 * math.pi))
                scale = config.micro_fraction if p in micro_idx else 1.0
                fx[0, ..., p] += scale * (base + asym)
                fx[1, ..., p] += scale * (base - asym)
        for p, prof in enumerate(profiles):
            for s in range(2):
                f[s] += amp * fx[(s,) + (Ellipsis, p)][..., None, None, None] * prof
        # transverse magnetic seed across the same flat band
        b = np.zeros((3,) + sgrid.shape)
        for k in range(1, kmax + 1):
            ph = rng.uniform(0.0, 2.0 * math.pi)
            b[2] += config.b_fraction * amp * rng.uniform(0.5, 1.0) * np.cos(
                xi0 * k * x0 + ph)
        em = maxwell.EMField(np.zeros((3,) + sgrid.shape, dtype=complex),
                             sgrid.forward(b))

    rho_spec = sgrid.forward(maxwell.charge_density(vgrid, f))
    em = maxwell.make_compatible(sgrid, em, rho_spec)
    return PhaseState(f=f, em=em, t=0.0)


# ---------------------------------------------------------------------------
# collision substep
# ---------------------------------------------------------------------------


class CollisionStepper:
    """Implicit-trapezoid collision substep in species sum/difference form."""

    def __init__(self, tables: landau.CollisionTables, dt: float,
                 method: str = "auto", cg_tol: float = 1e-12,
                 direct_max_nv: int = 16):
        self.tables = tables
        self.dt = dt
        self.cg_tol = cg_tol
        if method == "auto":
            method = "direct" if tables.n <= direct_max_nv else "cg"
        if method == "direct" and tables.n > direct_max_nv:
            raise ValueError(
                f"direct collision solver limited to n_v <= {direct_max_nv}")
        self.method = method
        self._prop = None
        self._precond = None
        self.last_iterations = 0
        if method == "direct":
            self._build_propagators(direct_max_nv)

    # dense cached propagators -------------------------------------------------
    def _build_propagators(self, limit: int) -> None:
        a = landau.dense_A(self.tables, limit=limit)
        k = landau.dense_K(self.tables, limit=limit)
        n3 = self.tables.n ** 3
        eye = np.eye(n3)
        props = []
        for op in (2.0 * (a + k), 2.0 * a):
            m_plus = eye + 0.5 * self.dt * op
            m_minus = eye - 0.5 * self.dt * op
            props.append(sla.solve(m_plus, m_minus, assume_a="sym"))
        self._prop = props

    # matrix-free operator applications ----------------------------------------
    def _op_s(self, x: np.ndarray) -> np.ndarray:
        return x + self.dt * (landau.apply_A(self.tables, x) + landau.apply_K(self.tables, x))

    def _op_d(self, x: np.ndarray) -> np.ndarray:
        return x + self.dt * landau.apply_A(self.tables, x)

    def _rhs_s(self, x: np.ndarray) -> np.ndarray:
        return x - self.dt * (landau.apply_A(self.tables, x) + landau.apply_K(self.tables, x))

    def _rhs_d(self, x: np.ndarray) -> np.ndarray:
        return x - self.dt * landau.apply_A(self.tables, x)

    def _pcg(self, op, rhs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        """Batched preconditioned CG over all leading axes at once."""
        if self._precond is None:
            grid = self.tables.grid
            scale = 4.0 * float(np.max(self.tables.sigma)) / grid.spacing ** 2
            self._precond = 1.0 / (1.0 + self.dt * scale *
                                   grid.bracket(self.tables.gamma + 2.0))
        m_inv = self._precond
        bdims = tuple(range(rhs.ndim - 3))

        def dots(a, b):
            return np.sum(a * b, axis=(-3, -2, -1), keepdims=True)

        x = x0.copy()
        r = rhs - op(x)
        z = m_inv * r
        p = z.copy()
        rz = dots(r, z)
        rhs_norm = np.sqrt(np.sum(rhs * rhs))
        tol2 = (self.cg_tol * max(rhs_norm, 1e-300)) ** 2
        for it in range(500):
            res2 = float(np.sum(r * r))
            if res2 <= tol2:
                self.last_iterations = it
                return x
            ap = op(p)
            alpha = rz / np.maximum(dots(p, ap), 1e-300)
            x = x + alpha * p
            r = r - alpha * ap
            z = m_inv * r
            rz_new = dots(r, z)
            beta = rz_new / np.maximum(rz, 1e-300)
            p = z + beta * p
            rz = rz_new
        raise RuntimeError(
            f"collision CG did not reach residual {self.cg_tol:g} in 500 iterations "
            f"(batch {bdims}, final residual {math.sqrt(res2):.3e})")

    def advance(self, f: np.ndarray) -> np.ndarray:
        """One trapezoid collision step on the species pair (batched over x)."""
        s = f[0] + f[1]
        d = f[0] - f[1]
        if self.method == "direct":
            n3 = self.tables.n ** 3
            lead = s.shape[:-3]
            s2 = s.reshape(-1, n3) @ self._prop[0].T
            d2 = d.reshape(-1, n3) @ self._prop[1].T
            s, d = s2.reshape(lead + self.tables.grid.shape), d2.reshape(
                lead + self.tables.grid.shape)
        else:
            s = self._pcg(self._op_s, self._rhs_s(s), s)
            d = self._pcg(self._op_d, self._rhs_d(d), d)
        return np.stack([0.5 * (s + d), 0.5 * (s - d)])


# ---------------------------------------------------------------------------
# full right-hand side (unsplit; used by tests and the field/force stage)
# ---------------------------------------------------------------------------


def _field_source_on_f(sgrid: SpatialGrid, vgrid: VelocityGrid,
                       e_phys: np.ndarray) -> np.ndarray:
    """E . v mu^(1/2) q1 term, shape (2, *x, n, n, n)."""
    mu_half = vgrid.mu_half()
    v = vgrid.axes()
    acc = 0.0
    for a in range(3):
        va_mu = (v[a] + 0 * mu_half) * mu_half
        acc = acc + e_phys[a][..., None, None, None] * va_mu
    return np.stack([acc, -acc])


def _lorentz_force_terms(sgrid: SpatialGrid, vgrid: VelocityGrid, f: np.ndarray,
                         e_phys: np.ndarray, b_phys: np.ndarray,
                         fd4: np.ndarray) -> np.ndarray:
    """-q0 (E + v x B) . grad_v f + (q0/2) E . v f  (nonlinear mode only)."""
    v1, v2, v3 = vgrid.axes()
    grad = [landau._apply_axis(fd4, f, j - 3) for j in range(3)]

    def xavv(field_a):
        return field_a[..., None, None, None]

    wx = [
        xavv(e_phys[0]) + v2 * xavv(b_phys[2]) - v3 * xavv(b_phys[1]),
        xavv(e_phys[1]) + v3 * xavv(b_phys[0]) - v1 * xavv(b_phys[2]),
        xavv(e_phys[2]) + v1 * xavv(b_phys[1]) - v2 * xavv(b_phys[0]),
    ]
    adv = wx[0] * grad[0] + wx[1] * grad[1] + wx[2] * grad[2]
    ev = xavv(e_phys[0]) * v1 + xavv(e_phys[1]) * v2 + xavv(e_phys[2]) * v3
    q0 = np.array([1.0, -1.0]).reshape((2,) + (1,) * (f.ndim - 1))
    return -q0 * adv + 0.5 * q0 * ev * f


def rhs_full(state: PhaseState, sgrid: SpatialGrid, vgrid: VelocityGrid,
             tables: landau.CollisionTables, mode: str = LINEARIZED,
             fd4: np.ndarray | None = None):
    """Unsplit right-hand side (df/dt, dE/dt, dB/dt); diagnostic reference.

    The production integrator applies the same pieces through Strang
    splitting; this assembly is the wiring oracle for term-level tests.
    """
    f = state.f
    x_axes = tuple(range(1, 1 + sgrid.n_active))
    fspec = sgrid.forward(f, x_axes)
    # transport -v . grad_x f
    df_spec = np.zeros_like(fspec)
    v = vgrid.axes()
    for i, axis in enumerate(sgrid.active_axes):
        xi = sgrid.xi_mesh()[i]
        sh = [1] * fspec.ndim
        sh[1 + i] = sgrid.n_x
        mult = (1j * xi.ravel()).reshape(sh)
        va = v[axis]
        df_spec = df_spec - mult * fspec * va
    df = sgrid.inverse(df_spec, x_axes).real

    e_phys = state.em.e_phys(sgrid)
    df += _field_source_on_f(sgrid, vgrid, e_phys)
    df -= landau.apply_L(tables, f)

    if mode == NONLINEAR:
        if fd4 is None:
            fd4 = fd_gradient_matrix_o4(vgrid.nodes_1d)
        b_phys = state.em.b_phys(sgrid)
        df += _lorentz_force_terms(sgrid, vgrid, f, e_phys, b_phys, fd4)
        df += landau.apply_Gamma(tables, f, f)

    j_spec = sgrid.forward(maxwell.current_density(vgrid, f))
    de, db = maxwell.field_rhs(sgrid, state.em, j_spec)
    return df, de, db


# ---------------------------------------------------------------------------
# Strang stepper
# ---------------------------------------------------------------------------


class Stepper:
    """Precomputed Strang-splitting stepper for a fixed configuration."""

    def __init__(self, config: RunConfig, sgrid: SpatialGrid, vgrid: VelocityGrid,
                 tables: landau.CollisionTables):
        self.config = config
        self.sgrid = sgrid
        self.vgrid = vgrid
        self.tables = tables
        self.collision = CollisionStepper(
            tables, config.dt, method=config.collision_solver,
            cg_tol=config.cg_tol, direct_max_nv=config.direct_max_nv)
        self._phases = self._transport_phases(0.5 * config.dt)
        self._fd4 = fd_gradient_matrix_o4(vgrid.nodes_1d)
        self.x_axes = tuple(range(1, 1 + sgrid.n_active))

    def _transport_phases(self, tau: float):
        phases = []
        v = self.vgrid.axes()
        ndim_f = 1 + self.sgrid.n_active + 3
        nyq = self.sgrid.n_x // 2 if self.sgrid.n_x % 2 == 0 else -1
        for i, axis in enumerate(self.sgrid.active_axes):
            xi = self.sgrid.xi_1d()
            sh = [1] * ndim_f
            sh[1 + i] = self.sgrid.n_x
            xi_b = xi.reshape(sh)
            va = v[axis]  # broadcast over trailing v axes
            ph = np.exp(-1j * tau * xi_b * va)
            if nyq >= 0:
                # the Nyquist mode has no Hermitian partner; the symmetric
                # (cosine) phase keeps real fields real and never amplifies
                idx = [slice(None)] * ndim_f
                idx[1 + i] = nyq
                ph[tuple(idx)] = np.cos(tau * xi[nyq] * va) + 0j
            phases.append(ph)
        return phases

    def transport_half(self, f: np.ndarray) -> np.ndarray:
        spec = self.sgrid.forward(f, self.x_axes)
        for ph in self._phases:
            spec = spec * ph
        return self.sgrid.inverse(spec, self.x_axes).real

    def _stage_rhs(self, f: np.ndarray, e_spec: np.ndarray, b_spec: np.ndarray):
        if not self.config.couple_fields:
            de = maxwell.curl_spec(self.sgrid, b_spec)
            db = -maxwell.curl_spec(self.sgrid, e_spec)
            return np.zeros_like(f), de, db
        e_phys = self.sgrid.inverse(e_spec).real
        df = _field_source_on_f(self.sgrid, self.vgrid, e_phys)
        if self.config.mode == NONLINEAR:
            b_phys = self.sgrid.inverse(b_spec).real
            df += _lorentz_force_terms(self.sgrid, self.vgrid, f, e_phys, b_phys,
                                       self._fd4)
            df += landau.apply_Gamma(self.tables, f, f)
        j_spec = self.sgrid.forward(maxwell.current_density(self.vgrid, f))
        de = maxwell.curl_spec(self.sgrid, b_spec) - j_spec
        db = -maxwell.curl_spec(self.sgrid, e_spec)
        return df, de, db

    def field_force_half(self, f, e_spec, b_spec):
        """Explicit midpoint over dt/2 for the field/force subsystem."""
        tau = 0.5 * self.config.dt
        df1, de1, db1 = self._stage_rhs(f, e_spec, b_spec)
        fm = f + 0.5 * tau * df1
        em_ = e_spec + 0.5 * tau * de1
        bm = b_spec + 0.5 * tau * db1
        df2, de2, db2 = self._stage_rhs(fm, em_, bm)
        return f + tau * df2, e_spec + tau * de2, b_spec + tau * db2

    def step(self, state: PhaseState) -> PhaseState:
        f = self.transport_half(state.f)
        f, e, b = self.field_force_half(f, state.em.e_spec, state.em.b_spec)
        f = self.collision.advance(f)
        f, e, b = self.field_force_half(f, e, b)
        f = self.transport_half(f)
        return PhaseState(f=f, em=maxwell.EMField(e, b), t=state.t + self.config.dt)


def step(state: PhaseState, stepper: Stepper) -> PhaseState:
    """Advance one Strang step (wrapper around Stepper.step)."""
    return stepper.step(state)


# ---------------------------------------------------------------------------
# smallness functional of the initial data
# ---------------------------------------------------------------------------


def y0_functional(state: PhaseState, config: RunConfig, sgrid: SpatialGrid,
                  vgrid: VelocityGrid) -> float:
    """Discrete smallness functional of the initial data.

    Sum (not sum of squares) of the weighted mixed-derivative norms at the
    two index depths, the field Sobolev and negative-order norms, and the
    negative-order norm of f itself:

        sum_{|a|+|b| <= n0} ||w_{l0+l*-|b|} d^a_b f|| +
        sum_{|a|+|b| <= N}  ||w_{l-|b|}     d^a_b f|| +
        ||(E,B)||_{H^N} + ||(E,B)||_{H^-s} + ||f||_{H^-s}
    """
    from . import diagnostics as diag

    ctx = diag.DiagContext.from_config(config, sgrid, vgrid, tables=None,
                                       projector=None)
    total = 0.0
    for depth, ell_base in ((config.n0, config.ell0 + config.lstar),
                            (config.n_max, config.ell)):
        for norm2 in diag.weighted_mixed_norm2_terms(ctx, state.f, t=0.0,
                                                     n_total=depth,
                                                     ell_base=ell_base):
            total += math.sqrt(norm2)
    e_spec, b_spec = state.em.e_spec, state.em.b_spec
    hneg_f, _ = diag.f_sobolev(ctx, state.f, config.s_exp, 0)
    hn = 0.0
    hneg_em = 0.0
    for comp in list(e_spec) + list(b_spec):
        hneg_c, hn_c = diag.spec_sobolev(ctx, comp, config.s_exp, config.n_max)
        hn += hn_c ** 2
        hneg_em += hneg_c ** 2
    total += math.sqrt(hn) + math.sqrt(hneg_em) + hneg_f
    return total


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str, state: PhaseState, step_index: int = 0) -> None:
    """Binary snapshot: 64-byte descriptor + little-endian float64 payload."""
    f = np.ascontiguousarray(state.f, dtype="<f8")
    e = np.ascontiguousarray(state.em.e_spec, dtype="<c16")
    b = np.ascontiguousarray(state.em.b_spec, dtype="<c16")
    n_active = f.ndim - 4
    n_x = f.shape[1] if n_active else 1
    head = struct.pack("<8sIIIIQd", CKPT_MAGIC, CKPT_VERSION, n_active,
                       n_x, f.shape[-1], step_index, state.t).ljust(64, b"\0")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(f.tobytes())
        fh.write(e.tobytes())
        fh.write(b.tobytes())


def load_checkpoint(path: str):
    """Returns (state, step_index); shapes recovered from the descriptor."""
    with open(path, "rb") as fh:
        head = fh.read(64)
        magic, version, n_active, n_x, n_v, step_index, t = struct.unpack(
            "<8sIIIIQd", head[:40])
        if magic != CKPT_MAGIC or version != CKPT_VERSION:
            raise ValueError(f"{path} is not a recognized checkpoint")
        x_shape = (n_x,) * n_active
        f_count = 2 * (n_x ** n_active) * n_v ** 3
        em_count = 3 * (n_x ** n_active)
        f = np.frombuffer(fh.read(8 * f_count), dtype="<f8").reshape(
            (2,) + x_shape + (n_v,) * 3).copy()
        e = np.frombuffer(fh.read(16 * em_count), dtype="<c16").reshape(
            (3,) + x_shape).copy()
        b = np.frombuffer(fh.read(16 * em_count), dtype="<c16").reshape(
            (3,) + x_shape).copy()
    return PhaseState(f=f, em=maxwell.EMField(e, b), t=t), step_index


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


@dataclass
class MonitorSeries:
    """Per-step energy/dissipation rows for the Lyapunov check."""

    t: list = field(default_factory=list)
    e_k: list = field(default_factory=list)        # arrays (k_max+1,)
    d_k: list = field(default_factory=list)        # literal dissipation functionals
    d_proxy_k: list = field(default_factory=list)  # collisional quadratic forms

    def as_arrays(self):
        return (np.array(self.t), np.array(self.e_k).T,
                np.array(self.d_k).T, np.array(self.d_proxy_k).T)


@dataclass
class RunResult:
    config: RunConfig
    reports: list
    monitor: MonitorSeries
    macro_history: list
    final_state: PhaseState
    contraction_violations: int = 0
    aborted: bool = False
    abort_step: int = -1


def run(config: RunConfig, initial: PhaseState | None = None,
        resume_step: int = 0, tables: landau.CollisionTables | None = None,
        checkpoint_dir: str | None = None) -> RunResult:
    """Integrate to t_end, emitting functional reports at the configured cadence.

    Deterministic for a fixed config: identical seeds and parameters give
    bit-identical trajectories and reports.  Non-finite values abort with
    the last good state attached to the NanAbort exception (and dumped as a
    checkpoint when ``checkpoint_dir`` is given).
    """
    from . import diagnostics as diag

    config.validate()
    sgrid, vgrid = config.grids()
    if tables is None:
        tables = landau.build_collision_tables(vgrid, config.gamma)
    projector = macro_micro.MacroProjector(vgrid)
    ctx = diag.DiagContext.from_config(config, sgrid, vgrid, tables, projector)
    stepper = Stepper(config, sgrid, vgrid, tables)

    state = initial.copy() if initial is not None else initial_state(config, sgrid, vgrid)
    if not (np.all(np.isfinite(state.f)) and np.all(np.isfinite(state.em.e_spec))
            and np.all(np.isfinite(state.em.b_spec))):
        raise NanAbort(0, state.t, state)
    n_steps = int(round(config.t_end / config.dt))

    reports: list = []
    monitor = MonitorSeries()
    macro_history: list = []
    contraction_violations = 0

    check_contraction = (config.preset == "relaxation" and config.mode == LINEARIZED)

    def record_monitor(st: PhaseState):
        ek, dk, dpk = diag.monitor_row(ctx, st)
        monitor.t.append(st.t)
        monitor.e_k.append(ek)
        monitor.d_k.append(dk)
        monitor.d_proxy_k.append(dpk)

    def record_report(st: PhaseState):
        rep = diag.build_report(ctx, st)
        if reports:
            rep.x_t = max(reports[-1].x_t, rep.x_instant)
        else:
            rep.x_t = rep.x_instant
        if len(monitor.t) >= 2:
            dtm = monitor.t[-1] - monitor.t[-2]
            de = (np.asarray(monitor.e_k[-1]) - np.asarray(monitor.e_k[-2])) / dtm
            dp = 0.5 * (np.asarray(monitor.d_proxy_k[-1]) +
                        np.asarray(monitor.d_proxy_k[-2]))
            rep.lyap_delta = de + dp
        reports.append(rep)
        macro_history.append(diag.macro_snapshot(ctx, st))

    if config.monitor_every:
        record_monitor(state)
    record_report(state)

    prev_norm2 = float(np.sum(state.f ** 2))
    for k in range(resume_step, n_steps):
        new_state = stepper.step(state)
        if not np.all(np.isfinite(new_state.f)):
            if checkpoint_dir:
                save_checkpoint(os.path.join(checkpoint_dir, "last_good.bin"),
                                state, k)
            raise NanAbort(k + 1, new_state.t, state)
        if check_contraction:
            norm2 = float(np.sum(new_state.f ** 2))
            if norm2 > prev_norm2 * (1.0 + 1e-10) + 1e-300:
                contraction_violations += 1
            prev_norm2 = norm2
        state = new_state
        step_no = k + 1
        if config.monitor_every and step_no % config.monitor_every == 0:
            record_monitor(state)
        if step_no % config.report_every == 0 or step_no == n_steps:
            record_report(state)
        if checkpoint_dir and config.checkpoint_every and \
                step_no % config.checkpoint_every == 0:
            save_checkpoint(os.path.join(checkpoint_dir, f"step{step_no:08d}.bin"),
                            state, step_no)

    return RunResult(config=config, reports=reports, monitor=monitor,
                     macro_history=macro_history, final_state=state,
                     contraction_violations=contraction_violations)
