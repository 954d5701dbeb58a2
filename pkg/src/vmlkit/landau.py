"""Landau collision kernel, linearized operator, and anisotropic norms.

The bilinear Landau operator in divergence form, with the first argument
the transported (field) distribution and the second the background:

    Q(F, G)(v) = sum_ij d/dv_i int Phi^ij(v - v*) { G(v*) d_j F(v)
                                                  - (d_j G)(v*) F(v) } dv*

Phi^ij(u) = (delta_ij - u_i u_j / |u|^2) |u|^(gamma+2) is the soft-potential
kernel, gamma in [-3, -2), gamma = -3 the Coulomb case.

Linearizing F_pm = mu + mu^(1/2) f_pm about the global Maxwellian gives the
species-pair operator

    L_pm f = 2 A f_pm + K (f_plus + f_minus)

where A is the Maxwellian-background diffusion part and K the convolution
(field-particle) part.  Both are discretized with the exponentially
weighted stencil D_j = mu^(1/2) d/dv_j mu^(-1/2) folded into bounded
coefficients:

    A h = sum_ij D_i^T [ sigma^ij (D_j h) ]
    K h = -sum_ij D_i^T [ mu^(1/2) Phi^ij * (mu^(1/2) D_j h) ]

with sigma^ij = Phi^ij * mu computed by the *same* discrete convolution.
Because the underlying difference stencils are exact on quadratics and
D annihilates mu^(1/2) exactly, the discrete operator is symmetric
positive semidefinite and kills the six collision invariants
span{[1,0], [0,1], [v_i, v_i], [|v|^2, |v|^2]} * mu^(1/2) to round-off,
not merely to truncation order.

Convolutions are evaluated by zero-padded real FFTs with the singular
self-cell replaced by the analytic ball average of |u|^(gamma+2) times
the angular mean (2/3) I of the projector.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .phase_grid import (
    VelocityGrid,
    WeightParams,
    fd_gradient_matrix,
)

_WORKERS = min(4, os.cpu_count() or 1)

CACHE_MAGIC = b"VMLSIGC1"
CACHE_VERSION = 1


class CoercivityFailure(RuntimeError):
    """Raised when the sampled spectral gap is nonpositive; carries the report."""

    def __init__(self, report):
        super().__init__(
            f"nonpositive coercivity ratio {report.min_ratio:.3e} at sample "
            f"{report.argmin_sample}"
        )
        self.report = report


def phi_kernel(v: np.ndarray, gamma: float) -> np.ndarray:
    """Landau kernel matrix Phi(v); input shape (..., 3) -> output (..., 3, 3).

    v = 0 is a genuine singularity of the kernel and is rejected; the
    convolution quadrature treats that cell by the analytic ball average
    instead (see ``build_collision_tables``).
    """
    v = np.asarray(v, dtype=float)
    usq = np.sum(v * v, axis=-1)
    if np.any(usq == 0.0):
        raise ValueError("phi_kernel is singular at v = 0")
    scale = usq ** (0.5 * (gamma + 2.0))
    eye = np.eye(3)
    proj = eye - v[..., :, None] * v[..., None, :] / usq[..., None, None]
    return scale[..., None, None] * proj


@dataclass(frozen=True)
class KernelSample:
    """A kernel evaluation bundled with its argument (test/report convenience)."""

    at: np.ndarray
    matrix: np.ndarray


def kernel_sample(v, gamma: float) -> KernelSample:
    v = np.asarray(v, dtype=float)
    return KernelSample(at=v, matrix=phi_kernel(v, gamma))


def _phi_regularized(u1, u2, u3, gamma: float, h: float) -> np.ndarray:
    """Pointwise kernel table Phi^ij(u) with the self-cell ball average at u = 0.

    Returns shape (3, 3, *u.shape).  The u = 0 entry is
    (2/3) I * (4 pi / (gamma+5)) r_c^(gamma+5) / h^3 with r_c the radius of
    the ball of volume h^3: the exact cell mean of |u|^(gamma+2) times the
    angular average of the projector.
    """
    usq = u1 * u1 + u2 * u2 + u3 * u3
    sing = usq == 0.0
    usq_safe = np.where(sing, 1.0, usq)
    scale = usq_safe ** (0.5 * (gamma + 2.0))
    u = np.stack(np.broadcast_arrays(u1, u2, u3))
    out = np.empty((3, 3) + usq.shape)
    for i in range(3):
        for j in range(3):
            proj = (1.0 if i == j else 0.0) - u[i] * u[j] / usq_safe
            out[i, j] = np.where(sing, 0.0, scale * proj)
    r_c = h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
    self_cell = (2.0 / 3.0) * (4.0 * np.pi / (gamma + 5.0)) * r_c ** (gamma + 5.0) / h ** 3
    for i in range(3):
        out[i, i][sing] = self_cell
    return out


@dataclass
class CollisionTables:
    """Precomputed collision data for matrix-free operator application.

    sigma        : (3, 3, n, n, n) Landau collision frequency Phi^ij * mu
    kernel_hat   : rfft of the padded kernel difference table times the cell
                   volume, indexed [i][j] (symmetric entries shared)
    dmat / dtmat : n x n weighted first-derivative stencils per axis,
                   dmat ~ mu^(1/2) d mu^(-1/2), dtmat ~ mu^(-1/2) d mu^(1/2)
    fd           : plain second-order stencil (also used by sigma norms)
    """

    grid: VelocityGrid
    gamma: float
    sigma: np.ndarray
    kernel_hat: list
    dmat: np.ndarray
    dtmat: np.ndarray
    fd: np.ndarray
    mu: np.ndarray = field(repr=False, default=None)
    mu_half: np.ndarray = field(repr=False, default=None)
    bracket_par: np.ndarray = field(repr=False, default=None)   # <v>^(gamma/2)
    bracket_perp: np.ndarray = field(repr=False, default=None)  # <v>^((gamma+2)/2)
    pad: int = 0

    @property
    def n(self) -> int:
        return self.grid.n_v


def _pad_offsets(n: int) -> np.ndarray:
    p = 2 * n
    idx = np.arange(p)
    off = np.where(idx < n, idx, idx - p)
    return off


def build_collision_tables(grid: VelocityGrid, gamma: float,
                           cache_dir: str | None = None) -> CollisionTables:
    """Assemble kernel FFT tables, collision frequency fields, and stencils.

    The collision frequency is produced by the same padded-FFT convolution
    later used inside the operator, which is what makes the discrete
    cancellation between the diffusion and convolution halves exact on the
    collision invariants.
    """
    if grid.n_v < 8:
        raise ValueError(
            f"n_v = {grid.n_v} is too coarse for the collision quadrature (need >= 8)"
        )
    if not (-3.0 <= gamma < -2.0):
        raise ValueError(f"gamma must lie in [-3, -2), got {gamma}")

    n = grid.n_v
    h = grid.spacing
    p = 2 * n
    off = _pad_offsets(n) * h
    u1 = off[:, None, None]
    u2 = off[None, :, None]
    u3 = off[None, None, :]
    kern = _phi_regularized(u1, u2, u3, gamma, h) * grid.cell_volume

    kernel_hat = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(i, 3):
            khat = sfft.rfftn(kern[i, j], axes=(-3, -2, -1), workers=_WORKERS)
            kernel_hat[i][j] = khat
            kernel_hat[j][i] = khat

    tables = CollisionTables(
        grid=grid,
        gamma=gamma,
        sigma=None,
        kernel_hat=kernel_hat,
        dmat=None,
        dtmat=None,
        fd=None,
        pad=p,
    )

    sigma = None
    if cache_dir is not None:
        sigma = _load_sigma_cache(cache_dir, grid, gamma)
    if sigma is None:
        sigma = _convolve_components(tables, grid.mu())
        if cache_dir is not None:
            save_sigma_cache(cache_dir, grid, gamma, sigma)
    tables.sigma = sigma

    fd = fd_gradient_matrix(grid.nodes_1d)
    g1d = grid.mu_half_1d()
    ratio = g1d[:, None] / g1d[None, :]
    tables.fd = fd
    tables.dmat = fd * ratio          # mu^(1/2) FD mu^(-1/2)
    tables.dtmat = fd / ratio         # mu^(-1/2) FD mu^(1/2)
    tables.mu = grid.mu()
    tables.mu_half = grid.mu_half()
    tables.bracket_par = grid.bracket(0.5 * gamma)
    tables.bracket_perp = grid.bracket(0.5 * (gamma + 2.0))
    return tables


# ---------------------------------------------------------------------------
# convolution and stencil primitives
# ---------------------------------------------------------------------------


def _apply_axis(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """Contract a stencil matrix along one of the last three (velocity) axes."""
    moved = np.moveaxis(arr, axis, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, axis)


def _pad_v(arr: np.ndarray, n: int, p: int) -> np.ndarray:
    out = np.zeros(arr.shape[:-3] + (p, p, p), dtype=arr.dtype)
    out[..., :n, :n, :n] = arr
    return out


def _convolve_components(tables: CollisionTables, w: np.ndarray) -> np.ndarray:
    """All components Phi^ij * w for a scalar field w; returns (3, 3, ...)."""
    n, p = tables.n, tables.pad
    what = sfft.rfftn(_pad_v(w, n, p), axes=(-3, -2, -1), workers=_WORKERS)
    out = np.empty((3, 3) + w.shape)
    for i in range(3):
        for j in range(i, 3):
            conv = sfft.irfftn(tables.kernel_hat[i][j] * what, s=(p, p, p),
                               axes=(-3, -2, -1), workers=_WORKERS)
            out[i, j] = conv[..., :n, :n, :n]
            out[j, i] = out[i, j]
    return out


def _convolve_contracted(tables: CollisionTables, w: list) -> list:
    """S_i = sum_j Phi^ij * w_j for a triple of fields (batched over leads)."""
    n, p = tables.n, tables.pad
    what = [sfft.rfftn(_pad_v(wj, n, p), axes=(-3, -2, -1), workers=_WORKERS)
            for wj in w]
    out = []
    for i in range(3):
        acc = tables.kernel_hat[i][0] * what[0]
        acc += tables.kernel_hat[i][1] * what[1]
        acc += tables.kernel_hat[i][2] * what[2]
        conv = sfft.irfftn(acc, s=(p, p, p), axes=(-3, -2, -1), workers=_WORKERS)
        out.append(conv[..., :n, :n, :n])
    return out


def apply_D(tables: CollisionTables, h: np.ndarray, j: int) -> np.ndarray:
    """Weighted derivative D_j h = mu^(1/2) d/dv_j (mu^(-1/2) h), folded stencil."""
    return _apply_axis(tables.dmat, h, j - 3)


def apply_Dt(tables: CollisionTables, h: np.ndarray, j: int) -> np.ndarray:
    """Adjoint-flavor derivative (d/dv_j - v_j/2) h = mu^(-1/2) d (mu^(1/2) h)."""
    return _apply_axis(tables.dtmat, h, j - 3)


def _apply_DT(tables: CollisionTables, h: np.ndarray, i: int) -> np.ndarray:
    return _apply_axis(tables.dmat.T, h, i - 3)


def apply_A(tables: CollisionTables, h: np.ndarray) -> np.ndarray:
    """Diffusion half: A h = sum_ij D_i^T [sigma^ij D_j h]; symmetric PSD."""
    xi = [apply_D(tables, h, j) for j in range(3)]
    out = np.zeros_like(h)
    for i in range(3):
        t_i = tables.sigma[i, 0] * xi[0]
        t_i += tables.sigma[i, 1] * xi[1]
        t_i += tables.sigma[i, 2] * xi[2]
        out += _apply_DT(tables, t_i, i)
    return out


def apply_K(tables: CollisionTables, h: np.ndarray) -> np.ndarray:
    """Convolution half: K h = -sum_ij D_i^T [mu^(1/2) Phi^ij * (mu^(1/2) D_j h)]."""
    m = tables.mu_half
    w = [m * apply_D(tables, h, j) for j in range(3)]
    s = _convolve_contracted(tables, w)
    out = np.zeros_like(h)
    for i in range(3):
        out -= _apply_DT(tables, m * s[i], i)
    return out


def apply_L(tables: CollisionTables, f: np.ndarray) -> np.ndarray:
    """Linearized collision operator on a species pair.

    f has shape (2, ..., n, n, n); returns L f = [2 A f_+ + K s, 2 A f_- + K s]
    with s = f_+ + f_-.  Symmetric and positive semidefinite on pairs, with
    the six-dimensional collision-invariant null space annihilated exactly.
    """
    s = f[0] + f[1]
    ks = apply_K(tables, s)
    return np.stack([2.0 * apply_A(tables, f[0]) + ks,
                     2.0 * apply_A(tables, f[1]) + ks])


def apply_Q(F: np.ndarray, G: np.ndarray, tables: CollisionTables) -> np.ndarray:
    """Bilinear Landau operator Q(F, G); F transported, G background.

    Conservative divergence form: the outer derivative is the negative
    transpose of the gradient stencil, so the velocity integral of the
    output vanishes to round-off for any inputs.  Momentum and energy
    moments of the symmetrized pair Q(F, G) + Q(G, F) also vanish to
    round-off thanks to the pointwise identity Phi(u) u = 0.
    """
    conv_g = _convolve_components(tables, G)
    dG = [_apply_axis(tables.fd, G, j - 3) for j in range(3)]
    w_i = _convolve_contracted(tables, dG)
    out = np.zeros(np.broadcast_shapes(F.shape, G.shape))
    for i in range(3):
        u_i = conv_g[i, 0] * _apply_axis(tables.fd, F, -3)
        u_i += conv_g[i, 1] * _apply_axis(tables.fd, F, -2)
        u_i += conv_g[i, 2] * _apply_axis(tables.fd, F, -1)
        u_i -= w_i[i] * F
        out -= _apply_axis(tables.fd.T, u_i, i - 3)
    return out


def apply_Gamma(tables: CollisionTables, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Nonlinear collision term Gamma(f, g) on species pairs.

    Gamma_pm(f, g) = mu^(-1/2) Q(mu^(1/2) f_pm, mu^(1/2)(g_+ + g_-)), with
    every mu^(+-1/2) factor folded into bounded stencil coefficients; the
    result is algebraically identical to the unweighted conservative Q, so
    the species mass moments vanish to round-off and the momentum/energy
    moments of Gamma(f, f) do as well.
    """
    m = tables.mu_half
    sg = g[0] + g[1]
    conv_sg = _convolve_components(tables, m * sg)
    dsg = [m * apply_Dt(tables, sg, j) for j in range(3)]
    w_i = _convolve_contracted(tables, dsg)

    out = np.zeros_like(f)
    for sp in range(2):
        dts = [apply_Dt(tables, f[sp], j) for j in range(3)]
        for i in range(3):
            y_i = conv_sg[i, 0] * dts[0]
            y_i += conv_sg[i, 1] * dts[1]
            y_i += conv_sg[i, 2] * dts[2]
            y_i -= w_i[i] * f[sp]
            out[sp] -= _apply_DT(tables, y_i, i)
    return out


# ---------------------------------------------------------------------------
# anisotropic sigma norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaNormSpec:
    """Weight configuration of the anisotropic dissipation norm."""

    weight: WeightParams = WeightParams()
    t: float = 0.0


def sigma_norm_sq(f: np.ndarray, tables: CollisionTables,
                  spec: SigmaNormSpec | None = None,
                  grad: list | None = None) -> np.ndarray:
    """Squared anisotropic norm |f|_{sigma,w}^2 per leading batch element.

    |f|^2 = int w^2 [ <v>^(gamma+2) f^2 + <v>^gamma (par grad)^2
                      + <v>^(gamma+2) |perp grad|^2 ] dv

    with the gradient split parallel/transverse to v.  At the v = 0 node the
    split is undefined and the full gradient is weighted transversally
    (single node, bounded weights).  ``grad`` overrides the finite-difference
    gradient with analytically supplied components for quadrature-only tests.
    """
    grid = tables.grid
    if grad is None:
        grad = [_apply_axis(tables.fd, f, j - 3) for j in range(3)]
    v1, v2, v3 = grid.axes()
    vn = grid.vnorm()
    origin = vn == 0.0
    vn_safe = np.where(origin, 1.0, vn)
    gpar = (grad[0] * v1 + grad[1] * v2 + grad[2] * v3) / vn_safe
    gpar = np.where(origin, 0.0, gpar)
    gsq = grad[0] ** 2 + grad[1] ** 2 + grad[2] ** 2
    gperp_sq = np.maximum(gsq - gpar ** 2, 0.0)
    gperp_sq = np.where(origin, gsq, gperp_sq)

    wsq = 1.0
    if spec is not None:
        wsq = grid.weight_field(spec.weight, spec.t) ** 2
    par_w = tables.bracket_par ** 2
    perp_w = tables.bracket_perp ** 2
    dens = wsq * (perp_w * f ** 2 + par_w * gpar ** 2 + perp_w * gperp_sq)
    return grid.integrate(dens)


def sigma_norm(f: np.ndarray, tables: CollisionTables,
               spec: SigmaNormSpec | None = None,
               grad: list | None = None) -> float:
    """Anisotropic norm of a v-field or species pair (summed over batch)."""
    return float(np.sqrt(np.sum(sigma_norm_sq(f, tables, spec, grad))))


def pair_inner(tables: CollisionTables, f: np.ndarray, g: np.ndarray) -> float:
    """Quadrature inner product over species and velocity."""
    return float(tables.grid.cell_volume * np.sum(f * g))


# ---------------------------------------------------------------------------
# coercivity measurement
# ---------------------------------------------------------------------------


@dataclass
class CoercivityReport:
    min_ratio: float
    median_ratio: float
    ratios: np.ndarray
    argmin_sample: int
    offending: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.min_ratio > 0.0


def smooth_sample_basis(grid: VelocityGrid, max_deg: int = 3) -> np.ndarray:
    """Monomials of total degree <= max_deg times mu^(1/2); coercivity samples.

    Smooth resolved functions make the sampled spectral gap a grid-stable
    surrogate of the continuum constant; node-level white noise instead
    probes stencil artifacts that drift with resolution.
    """
    v1, v2, v3 = grid.axes()
    mu_half = grid.mu_half()
    out = []
    for p in range(max_deg + 1):
        for q in range(max_deg + 1 - p):
            for r in range(max_deg + 1 - p - q):
                out.append((v1 ** p * v2 ** q * v3 ** r + 0.0 * mu_half) * mu_half)
    return np.stack(out)


def coercivity_gap(tables: CollisionTables, projector, n_samples: int = 100,
                   seed: int = 2202, max_deg: int = 3) -> CoercivityReport:
    """Sampled spectral gap min <L f, f> / |{I-P} f|_sigma^2 over random micro f.

    ``projector`` maps a species pair to its microscopic part (see
    macro_micro.micro_part).  Standard-normal coefficient vectors over the
    smooth polynomial-Maxwellian basis are drawn with a fixed seed,
    projected to the microscopic subspace, and the Rayleigh-type ratio is
    recorded; a nonpositive minimum raises CoercivityFailure carrying the
    offending sample.
    """
    rng = np.random.default_rng(seed)
    basis = smooth_sample_basis(tables.grid, max_deg)
    nb = basis.shape[0]
    ratios = np.empty(n_samples)
    coeffs = rng.standard_normal((n_samples, 2, nb))
    for k in range(n_samples):
        f = np.einsum("sb,bxyz->sxyz", coeffs[k], basis)
        fm = projector(f)
        denom = float(np.sum(sigma_norm_sq(fm, tables)))
        if denom <= 0.0:
            raise ValueError("sample projected to zero; pure-macro input rejected")
        num = pair_inner(tables, apply_L(tables, fm), fm)
        ratios[k] = num / denom
    imin = int(np.argmin(ratios))
    report = CoercivityReport(
        min_ratio=float(ratios[imin]),
        median_ratio=float(np.median(ratios)),
        ratios=ratios,
        argmin_sample=imin,
    )
    if report.min_ratio <= 0.0:
        report.offending = projector(
            np.einsum("sb,bxyz->sxyz", coeffs[imin], basis))
        raise CoercivityFailure(report)
    return report


# ---------------------------------------------------------------------------
# dense assembly (small grids: oracle and eigenstudies)
# ---------------------------------------------------------------------------

DENSE_MAX_NV = 12


def _dense_guard(n_v: int, limit: int) -> None:
    if n_v > limit:
        raise ValueError(
            f"dense assembly limited to n_v <= {limit} per axis (got {n_v})"
        )


def _sparse_D(tables: CollisionTables, weighted: bool = True):
    from scipy import sparse

    n = tables.n
    eye = sparse.identity(n, format="csr")
    base = sparse.csr_matrix(tables.dmat if weighted else tables.fd)
    mats = []
    for axis in range(3):
        parts = [eye, eye, eye]
        parts[axis] = base
        mats.append(sparse.kron(sparse.kron(parts[0], parts[1]), parts[2], format="csr"))
    return mats


def _dense_conv_matrix(tables: CollisionTables, i: int, j: int) -> np.ndarray:
    """Explicit convolution matrix C[a, b] = Phi^ij(v_a - v_b) h^3."""
    grid = tables.grid
    n, h = grid.n_v, grid.spacing
    d = np.arange(-(n - 1), n) * h
    table = _phi_regularized(d[:, None, None], d[None, :, None], d[None, None, :],
                             tables.gamma, h)[i, j] * grid.cell_volume
    idx = np.indices((n, n, n)).reshape(3, -1)
    out = np.empty((n ** 3, n ** 3))
    for col in range(n ** 3):
        da = idx[0] - idx[0, col] + n - 1
        db = idx[1] - idx[1, col] + n - 1
        dc = idx[2] - idx[2, col] + n - 1
        out[:, col] = table[da, db, dc]
    return out


def dense_A(tables: CollisionTables, limit: int = DENSE_MAX_NV) -> np.ndarray:
    _dense_guard(tables.n, limit)
    d = _sparse_D(tables)
    n3 = tables.n ** 3
    out = np.zeros((n3, n3))
    from scipy import sparse

    for i in range(3):
        for j in range(3):
            sig = sparse.diags(tables.sigma[i, j].ravel())
            out += (d[i].T @ (sig @ d[j])).toarray()
    return out


def dense_K(tables: CollisionTables, limit: int = DENSE_MAX_NV) -> np.ndarray:
    _dense_guard(tables.n, limit)
    d = _sparse_D(tables)
    from scipy import sparse

    m = sparse.diags(tables.mu_half.ravel())
    s = [m @ di for di in d]
    n3 = tables.n ** 3
    out = np.zeros((n3, n3))
    for i in range(3):
        for j in range(3):
            c = _dense_conv_matrix(tables, i, j)
            out -= s[i].T @ (c @ s[j].toarray() if sparse.issparse(s[j]) else c @ s[j])
    return out


def dense_L(tables: CollisionTables, limit: int = DENSE_MAX_NV) -> np.ndarray:
    """Full dense pair operator [[2A+K, K], [K, 2A+K]] (n_v <= 12 guard)."""
    _dense_guard(tables.n, limit)
    a = dense_A(tables, limit)
    k = dense_K(tables, limit)
    n3 = tables.n ** 3
    out = np.zeros((2 * n3, 2 * n3))
    out[:n3, :n3] = 2.0 * a + k
    out[n3:, n3:] = 2.0 * a + k
    out[:n3, n3:] = k
    out[n3:, :n3] = k
    return out


# ---------------------------------------------------------------------------
# binary sigma-table cache
# ---------------------------------------------------------------------------


def _cache_path(cache_dir: str, grid: VelocityGrid, gamma: float) -> str:
    tag = f"sigma_g{gamma:+.6f}_n{grid.n_v}_vmax{grid.v_max:.6f}.bin"
    return os.path.join(cache_dir, tag)


def _descriptor(grid: VelocityGrid, gamma: float) -> bytes:
    head = struct.pack(
        "<8sIIddd",
        CACHE_MAGIC,
        CACHE_VERSION,
        grid.n_v,
        float(gamma),
        float(grid.v_max),
        0.0,
    )
    return head.ljust(64, b"\0")


def save_sigma_cache(cache_dir: str, grid: VelocityGrid, gamma: float,
                     sigma: np.ndarray) -> str:
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(cache_dir, grid, gamma)
    with open(path, "wb") as fh:
        fh.write(_descriptor(grid, gamma))
        fh.write(np.ascontiguousarray(sigma, dtype="<f8").tobytes())
    return path


def _load_sigma_cache(cache_dir: str, grid: VelocityGrid, gamma: float):
    path = _cache_path(cache_dir, grid, gamma)
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        head = fh.read(64)
        magic, version, n_v, g, v_max, _ = struct.unpack("<8sIIddd", head[:40])
        if magic != CACHE_MAGIC or version != CACHE_VERSION:
            return None
        if n_v != grid.n_v or abs(g - gamma) > 1e-12 or abs(v_max - grid.v_max) > 1e-12:
            return None
        n = grid.n_v
        data = np.frombuffer(fh.read(8 * 9 * n ** 3), dtype="<f8")
    return data.reshape(3, 3, n, n, n).copy()
