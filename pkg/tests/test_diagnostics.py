import math

import numpy as np
import pytest

from vmlkit import diagnostics as diag
from vmlkit import evolve, landau, maxwell
from vmlkit.evolve import PhaseState, RunConfig, initial_state
from vmlkit.macro_micro import MacroProjector


@pytest.fixture(scope="module")
def ctx8():
    cfg = RunConfig(n_x=16, n_v=8, collision_solver="direct", direct_max_nv=8)
    sg, vg = cfg.grids()
    tab = landau.build_collision_tables(vg, cfg.gamma)
    proj = MacroProjector(vg)
    return cfg, diag.DiagContext.from_config(cfg, sg, vg, tab, proj)


def single_mode_state(sg, vg, k=2):
    f = np.zeros((2,) + sg.shape + vg.shape)
    e = np.zeros((3,) + sg.shape, dtype=complex)
    e[1, k] = 1.0 / math.sqrt(2.0)
    e[1, -k] = 1.0 / math.sqrt(2.0)
    return PhaseState(f=f, em=maxwell.EMField(e, np.zeros_like(e)), t=0.0)


class TestEnergyFamilies:
    def test_zero_state(self, ctx8):
        cfg, ctx = ctx8
        st = PhaseState(np.zeros((2,) + ctx.sgrid.shape + ctx.vgrid.shape),
                        maxwell.EMField.zero(ctx.sgrid), 0.0)
        cache = diag.SnapshotCache(ctx, st.f)
        assert diag.energy_unweighted(ctx, cache, st.em, 2) == 0.0
        assert diag.energy_k(ctx, cache, st.em, 1, 3) == 0.0

    def test_single_field_mode_multiplier_arithmetic(self, ctx8):
        cfg, ctx = ctx8
        st = single_mode_state(ctx.sgrid, ctx.vgrid, k=2)
        cache = diag.SnapshotCache(ctx, st.f)
        xi = ctx.sgrid.xi_1d()[2]
        e0 = diag.energy_unweighted(ctx, cache, st.em, 0)
        e1 = diag.energy_unweighted(ctx, cache, st.em, 1)
        assert e0 == pytest.approx(1.0, rel=1e-12)
        assert e1 == pytest.approx(1.0 + xi ** 2, rel=1e-12)

    def test_band_nesting(self, ctx8):
        cfg, ctx = ctx8
        rng = np.random.default_rng(0)
        f = rng.standard_normal((2,) + ctx.sgrid.shape + ctx.vgrid.shape)
        e = rng.standard_normal((3,) + ctx.sgrid.shape) + 0j
        st = PhaseState(f, maxwell.EMField(e, e.copy()), 0.0)
        cache = diag.SnapshotCache(ctx, st.f)
        vals = [diag.energy_k(ctx, cache, st.em, k, 3) for k in range(4)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
        full = diag.energy_unweighted(ctx, cache, st.em, 3)
        assert vals[0] == pytest.approx(full, rel=1e-12)

    def test_k_band_of_homogeneous_state_vanishes(self, ctx8):
        cfg, ctx = ctx8
        fv = np.ones((2,) + ctx.vgrid.shape)
        f = np.broadcast_to(fv[:, None], (2,) + ctx.sgrid.shape + ctx.vgrid.shape).copy()
        st = PhaseState(f, maxwell.EMField.zero(ctx.sgrid), 0.0)
        cache = diag.SnapshotCache(ctx, st.f)
        assert diag.energy_k(ctx, cache, st.em, 1, 3) < 1e-20

    def test_weighted_collapse_to_unweighted(self):
        # ell = 0, q = 0 removes the weight; with no velocity derivatives the
        # weighted energy equals the unweighted one exactly
        cfg = RunConfig(n_x=16, n_v=8, collision_solver="direct",
                        direct_max_nv=8, q=0.0, beta_max=0)
        sg, vg = cfg.grids()
        tab = landau.build_collision_tables(vg, cfg.gamma)
        proj = MacroProjector(vg)
        ctx = diag.DiagContext.from_config(cfg, sg, vg, tab, proj)
        st = initial_state(cfg, sg, vg)
        cache = diag.SnapshotCache(ctx, st.f)
        ew = diag.energy_weighted(ctx, cache, st.em, cfg.n_max, 0.0, t=1.3)
        en = diag.energy_unweighted(ctx, cache, st.em, cfg.n_max)
        assert ew == pytest.approx(en, rel=1e-12)

    def test_dissipation_micro_terms_vanish_on_pure_macro(self, ctx8):
        cfg, ctx = ctx8
        mu_half = ctx.vgrid.mu_half()
        rng = np.random.default_rng(1)
        gx = rng.standard_normal(ctx.sgrid.shape)
        f = np.zeros((2,) + ctx.sgrid.shape + ctx.vgrid.shape)
        f[0] = gx[:, None, None, None] * mu_half
        f[1] = f[0]
        cache = diag.SnapshotCache(ctx, f)
        fam = diag._assemble_weight_level(ctx, cache, 0.0, 0.0, 2, (0,))
        scale = fam.energy_f[0]
        assert fam.sigma_micro[0] < 1e-12 * scale
        assert fam.extra_micro[0] < 1e-12 * scale

    def test_extra_dissipation_prefactor_scales_exactly(self):
        # q = 0 freezes the weight itself, so on a frozen state only the
        # literal (1+t)^(-1-theta) prefactor moves
        cfg = RunConfig(n_x=16, n_v=8, collision_solver="direct",
                        direct_max_nv=8, q=0.0)
        sg, vg = cfg.grids()
        tab = landau.build_collision_tables(vg, cfg.gamma)
        ctx = diag.DiagContext.from_config(cfg, sg, vg, tab, MacroProjector(vg))
        st = initial_state(cfg, sg, vg)
        cache = diag.SnapshotCache(ctx, st.f)
        em0 = maxwell.EMField.zero(sg)
        base = diag.dissipation_weighted(ctx, cache, em0, 2, 0.0, t=0.0)
        later = diag.dissipation_weighted(ctx, cache, em0, 2, 0.0, t=3.0)
        fam = diag._assemble_weight_level(ctx, cache, 0.0, 0.0, 2, (0,))
        expect = base - fam.extra_micro[0] * (1.0 - 4.0 ** (-1.0 - ctx.theta))
        assert later == pytest.approx(expect, rel=1e-10)


class TestXFunctional:
    def test_running_sup_monotone_and_left_endpoint(self):
        t = np.linspace(0.0, 5.0, 20)
        decaying = 3.0 * (1.0 + t) ** -1.0
        x = diag.x_functional(t, decaying, decaying, decaying, eps0=0.1)
        assert np.all(np.diff(x) >= -1e-15)
        inst0 = decaying[0] * 2 + decaying[0]
        assert x[0] == pytest.approx(inst0)
        assert x[-1] == pytest.approx(x[0])  # sup attained at t = 0

    def test_eps0_ordering(self):
        t = np.linspace(0.0, 5.0, 20)
        ones = np.ones_like(t)
        x_small = diag.x_functional(t, 0 * ones, 0 * ones, ones, eps0=0.1)
        x_big = diag.x_functional(t, 0 * ones, 0 * ones, ones, eps0=1.0)
        assert np.all(x_big[1:] <= x_small[1:] + 1e-15)


class TestDecayFit:
    def test_synthetic_power_law(self):
        t = np.linspace(0.0, 50.0, 200)
        v = 2.7 * (1.0 + t) ** -1.5
        fit = diag.decay_fit(t, v, (1.0, 40.0), target_k=1, s_exp=0.5)
        assert fit.exponent == pytest.approx(-1.5, abs=0.01)
        assert fit.residual < 1e-10
        assert fit.target == -1.5
        assert fit.matches_target

    def test_exponential_regime_detected_by_residual(self):
        t = np.linspace(0.0, 30.0, 150)
        v = np.exp(-t)
        fit = diag.decay_fit(t, v, (10.0, 30.0))
        assert fit.exponent < -5.0
        assert fit.residual > 0.05  # poor power-law fit flags the regime
        assert fit.late_exp_rate == pytest.approx(-1.0, rel=0.05)

    def test_guards(self):
        t = np.linspace(0.0, 10.0, 40)
        v = (1.0 + t) ** -0.5
        with pytest.raises(ValueError):
            diag.decay_fit(t, v, (9.0, 9.5))  # fewer than 4 points
        v2 = v.copy()
        v2[10] = -1.0
        with pytest.raises(ValueError):
            diag.decay_fit(t, v2, (0.0, 10.0))

    def test_auto_window_prefers_clean_power_law(self):
        t = np.linspace(0.0, 60.0, 240)
        v = 5.0 * (1.0 + t) ** -0.5
        v[t < 3.0] *= np.exp(-(3.0 - t[t < 3.0]))  # early transient
        w = diag.auto_window(t, v)
        fit = diag.decay_fit(t, v, w)
        assert fit.exponent == pytest.approx(-0.5, abs=0.05)

    def test_caveat_present(self):
        t = np.linspace(0.0, 20.0, 100)
        fit = diag.decay_fit(t, (1 + t) ** -0.5, (1.0, 19.0))
        assert "torus" in fit.caveat


class TestLyapunovMonitor:
    def test_zero_trajectory(self):
        t = np.linspace(0.0, 1.0, 11)
        zero = np.zeros((2, 11))
        rep = diag.lyapunov_monitor(t, zero, zero)
        assert rep.flags == 0
        assert np.abs(rep.deltas).max() == 0.0

    def test_pure_relaxation_never_flags(self):
        cfg = RunConfig(n_x=8, n_v=8, dt=0.1, t_end=1.0, preset="relaxation",
                        collision_solver="direct", direct_max_nv=8,
                        report_every=10, monitor_every=1)
        res = evolve.run(cfg)
        t, ek, dk, dpk = res.monitor.as_arrays()
        rep = diag.lyapunov_monitor(t, ek, dpk)
        assert rep.flags == 0
        # energy is nonincreasing step by step under pure relaxation
        assert np.all(np.diff(ek[0]) <= 1e-14)

    def test_shape_guards(self):
        with pytest.raises(ValueError):
            diag.lyapunov_monitor([0.0], [[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            diag.lyapunov_monitor([0.0, 0.1], [[1.0, 2.0]], [[1.0]])


class TestInterpolationMonitor:
    def test_all_equal_scalar_sanity(self):
        t = np.linspace(0.0, 1.0, 5)
        ones = np.ones_like(t)
        r = diag.interpolation_monitor(t, ones, ones, ones, k=0, s_exp=0.5)
        assert np.allclose(r, 1.0)

    def test_scale_invariance(self):
        t = np.linspace(0.0, 1.0, 5)
        e = np.array([4.0, 3.0, 2.5, 2.0, 1.5])
        d = 2.0 * e
        cap = 1.5 * e
        lam = 0.37
        r1 = diag.interpolation_monitor(t, e, d, cap, k=1, s_exp=0.5)
        r2 = diag.interpolation_monitor(t, lam ** 2 * e, lam ** 2 * d,
                                        lam ** 2 * cap, k=1, s_exp=0.5)
        assert np.allclose(r1, r2)

    def test_default_run_ratio_order_one_and_grid_stable(self):
        vals = {}
        for n_v in (8, 10):
            cfg = RunConfig(n_x=16, n_v=n_v, dt=0.1, t_end=2.0,
                            collision_solver="direct", direct_max_nv=12,
                            report_every=2, monitor_every=0, amplitude=1e-3)
            res = evolve.run(cfg)
            reps = res.reports
            t = np.array([r.t for r in reps])
            e1 = np.array([r.e_k[1] for r in reps])
            d1 = np.array([r.d_k[1] for r in reps])
            cap1 = np.array([r.cap_k[1] for r in reps])
            r = diag.interpolation_monitor(t, e1, d1, cap1, k=1, s_exp=0.5)
            vals[n_v] = float(np.nanmax(r))
        for v in vals.values():
            assert 0.0 < v < 50.0  # order one, not orders of magnitude
        assert abs(vals[8] - vals[10]) <= 0.5 * max(vals.values())


class TestRieszChecks:
    def test_all_items_pass(self):
        checks = diag.riesz_checks(0.5)
        assert checks, "no checks returned"
        for c in checks:
            assert c.passed, f"{c.name}: {c.value} vs {c.threshold} ({c.detail})"

    def test_invalid_s_rejected(self):
        with pytest.raises(ValueError):
            diag.riesz_checks(2.0)


class TestReport:
    def test_header_row_alignment(self, ctx8):
        cfg, ctx = ctx8
        st = initial_state(RunConfig(n_x=16, n_v=8), ctx.sgrid, ctx.vgrid)
        rep = diag.build_report(ctx, st)
        cols = diag.FunctionalReport.header(cfg.k_max)
        row = rep.row(cfg.k_max)
        assert len(cols) == len(row)
        assert all(isinstance(v, (int, float)) for v in row)

    def test_report_nonnegative_entries(self, ctx8):
        cfg, ctx = ctx8
        st = initial_state(RunConfig(n_x=16, n_v=8), ctx.sgrid, ctx.vgrid)
        rep = diag.build_report(ctx, st)
        for name in ("e_n", "d_n", "e_w", "d_w", "ebar_top", "dbar_top",
                     "hneg_f", "gauss_residual", "div_b"):
            assert getattr(rep, name) >= 0.0
        assert np.all(rep.e_k >= 0.0)
        assert np.all(rep.d_k >= 0.0)
        # nesting of the unweighted band family
        assert rep.e_k[1] <= rep.e_k[0] * (1 + 1e-12)
