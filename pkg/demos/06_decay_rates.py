"""Algebraic decay of the band energies on the torus surrogate.

A scaled-down version of the default decay scenario: a flat broadband
spectrum inside the collisional (hydrodynamic) wavenumber range decays
like a heat-kernel superposition, so higher derivative bands E^k decay
faster on an intermediate window before the slowest torus mode takes
over exponentially.

This demo runs an n_v = 10 variant in about a minute: the band ordering
is visible but the coarse collision operator under-dissipates, so the
fitted exponents sit well short of the -(s+k) targets.  The full-scale
scenario (n_v = 16, t_end = 60) in the acceptance suite lands at
slope(E^0) ~ -0.6 and slope(E^1) ~ -1.6 against targets -0.5 and -1.5.
"""

import numpy as np

from vmlkit import diagnostics as diag, evolve
from vmlkit.evolve import RunConfig

cfg = RunConfig(n_x=64, n_v=10, dt=0.1, t_end=50.0, preset="broadband",
                collision_solver="direct", direct_max_nv=12,
                report_every=10, monitor_every=0, n_modes=21)
print(f"running the linearized broadband scenario "
      f"(n_x={cfg.n_x}, n_v={cfg.n_v}, L={cfg.box_length:.0f}, "
      f"t_end={cfg.t_end}) ...")
res = evolve.run(cfg)

ts = np.array([r.t for r in res.reports])
e0 = np.array([r.e_k[0] for r in res.reports])
e1 = np.array([r.e_k[1] for r in res.reports])

print("\n t      E^0           E^1")
for i in range(0, len(ts), 5):
    print(f" {ts[i]:5.1f}  {e0[i]:.6e}  {e1[i]:.6e}")

sel = ts >= 5.0
window = diag.auto_window(ts[sel], e0[sel])
fit0 = diag.decay_fit(ts, e0, window, target_k=0, s_exp=cfg.s_exp)
fit1 = diag.decay_fit(ts, e1, window, target_k=1, s_exp=cfg.s_exp)

print(f"\nfit window [{window[0]:.1f}, {window[1]:.1f}] "
      f"(chosen by minimal fit residual):")
print(f"  slope(E^0) = {fit0.exponent:+.3f}   target -(s+0) = {fit0.target:+.2f}")
print(f"  slope(E^1) = {fit1.exponent:+.3f}   target -(s+1) = {fit1.target:+.2f}")
print(f"  higher bands decay faster: gap {fit1.exponent - fit0.exponent:+.3f}")
print(f"  late-time exponential rate of the slowest mode: "
      f"{fit0.late_exp_rate:+.5f}")
print(f"\n{fit0.caveat}")

x = np.array([r.x_t for r in res.reports])
print(f"\na priori functional X(t): starts {x[0]:.4e}, ends {x[-1]:.4e} "
      f"(running sup, nondecreasing: {bool(np.all(np.diff(x) >= -1e-15))})")
