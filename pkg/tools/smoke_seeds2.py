"""Scratch driver: windowed dip metrics + plateau shape vs seed fraction."""

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
    return res, params, current


for frac in (1e-3, 2e-3, 3e-3, 5e-3):
    print(f"=== seed fraction {frac:g}")
    for mid in ModelId:
        res, params, current = run(mid, frac)
        t = res["t"]
        v = res["v"]
        tend = res["t_end"]
        cap = tend * current / 3600.0 * 1000.0 / params.m0[0]
        caperr = (cap - 1675.0) / 1675.0 * 100.0
        # mid-window dip: fall-then-rise inside [2%, 70%] of elapsed time
        sel = (t > 0.02 * tend) & (t < 0.70 * tend)
        vv = v[sel]
        tt = t[sel]
        vmax_after = np.maximum.accumulate(vv[::-1])[::-1]
        run_max = np.maximum.accumulate(vv)
        depth = np.minimum(vmax_after - vv, run_max - vv)
        k = int(np.argmax(depth))
        # voltage profile at fractions of elapsed time
        marks = [0.05, 0.15, 0.24, 0.27, 0.35, 0.6, 0.9]
        prof = " ".join(
            f"{frately:.0%}:{v[np.searchsorted(t, frately * tend)]:.3f}"
            for frately in marks
        )
        print(
            f"  {mid.name}: cap {caperr:+.2f}% | dip {depth[k]*1e3:6.2f} mV "
            f"@ {tt[k]/tend:.0%} | {prof}"
        )
