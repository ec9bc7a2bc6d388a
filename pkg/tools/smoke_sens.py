"""Scratch driver: criterion-style sensitivity directions on M4."""

import sys
import time

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

mid = ModelId.M4
model = build_model(mid)
base = nominal_parameters(mid)
current = c_rate_current(base, 0.3)


def run(params):
    pack = build_pack(model, params, impl=_core_py)
    y0 = initial_state(model, params)
    res = _core_py.simulate_core(
        pack, y0, current, 48000.0, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, 1e-8 * current,
    )
    cap = res["t"] * current / 3.6 / params.m0[0]
    return cap, res["v"], res["t_end"], res["termination"]


def tweak(path, value):
    return base.set(path, value, model)


def plateau_means(cap, v):
    hi_w = (cap > 0.04 * cap[-1]) & (cap < 0.18 * cap[-1])
    lo_w = (cap > 0.35 * cap[-1]) & (cap < 0.85 * cap[-1])
    return float(np.mean(v[hi_w])), float(np.mean(v[lo_w]))


t0 = time.time()
cap0, v0, dur0, term0 = run(base)
hp0, lp0 = plateau_means(cap0, v0)
print(f"nominal: dur={dur0:.0f} hp={hp0:.4f} lp={lp0:.4f} term={term0}")

for fac in (1.1, 0.9):
    cap, v, dur, term = run(tweak("E0[1]", base.e0[0] * fac))
    hp, lp = plateau_means(cap, v)
    print(f"E0[1] x{fac}: hp={hp:.4f} ({hp - hp0:+.4f}) lp={lp:.4f} "
          f"({lp - lp0:+.4f}) dur={dur:.0f} term={term}")

for fac in (1.1, 0.9):
    cap, v, dur, term = run(tweak("S_sat", base.s_sat * fac))
    hp, lp = plateau_means(cap, v)
    print(f"S_sat x{fac}: hp={hp:.4f} ({hp - hp0:+.4f}) lp={lp:.4f} "
          f"({lp - lp0:+.4f}) dur={dur:.0f} term={term}")

for fac in (1.1, 0.9):
    cap, v, dur, term = run(tweak("omega", base.omega * fac))
    hp, lp = plateau_means(cap, v)
    print(f"omega x{fac}: hp={hp:.4f} lp={lp:.4f} dur={dur:.0f} "
          f"({dur - dur0:+.0f}) term={term}")


def influence(path, lo_hi):
    """Sup-norm V gap between the +10% and -10% runs on a union grid."""
    capp, vp, _, _ = run(tweak(path, lo_hi * 1.1))
    capm, vm, _, _ = run(tweak(path, lo_hi * 0.9))
    grid = np.union1d(capp, capm)
    vpg = np.interp(grid, capp, vp)
    vmg = np.interp(grid, capm, vm)
    return float(np.max(np.abs(vpg - vmg)))


print("\ninfluences (sup-norm V between +10% and -10% runs):")
for j in range(model.n_reactions):
    sc_e = influence(f"E0[{j + 1}]", base.e0[j])
    sc_i = influence(f"i0[{j + 1}]", base.i0[j])
    flag = "OK " if sc_e > sc_i else "BAD"
    print(f"  [{flag}] E0[{j + 1}]={sc_e:9.5f}  i0[{j + 1}]={sc_i:9.5f}")

print(f"\nwall: {time.time() - t0:.1f} s")
