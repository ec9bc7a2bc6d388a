"""Scratch driver: seed-fraction sweep — dip presence vs capacity error."""

import sys

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters


def run(mid, frac):
    model = build_model(mid)
    params = nominal_parameters(mid, seed_fraction=frac)
    current = c_rate_current(params, 0.3)
    pack = build_pack(model, params, impl=_core_py)
    y0 = initial_state(model, params)
    res = _core_py.simulate_core(
        pack, y0, current, 48000.0, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, 1e-8 * current,
    )
    t = res["t"]
    v = res["v"]
    cap = res["t_end"] * current / 3600.0 * 1000.0 / params.m0[0]
    # biggest "fall then recover" signature after the first 2% of the run
    n = len(v)
    k2 = max(1, int(0.02 * n))
    vmax_after = np.maximum.accumulate(v[::-1])[::-1]
    rec = vmax_after - v
    # local maximum before the candidate dip must exceed the dip too
    run_max = np.maximum.accumulate(v)
    depth = np.minimum(rec, run_max - v)[k2:]
    k = int(np.argmax(depth)) + k2
    return cap, depth.max() * 1e3, t[k], res["termination"], v[0], v.max()


for frac in (1e-4, 1e-3, 2e-3, 3e-3, 5e-3, 1e-2):
    print(f"--- seed fraction {frac:g}")
    for mid in ModelId:
        cap, dep, tdip, term, v0, vmax = run(mid, frac)
        caperr = (cap - 1675.0) / 1675.0 * 100.0
        print(
            f"  {mid.name}: cap={cap:7.1f} ({caperr:+.2f}%) "
            f"dip_depth={dep:7.3f} mV at t={tdip:7.0f}s term={term} "
            f"V0={v0:.3f} Vmax={vmax:.3f}"
        )
