"""Scratch driver: run the pure-Python kernel on each model at 0.3C."""

import sys
import time

sys.path.insert(0, "/root/pkg/src")

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

for mid in ModelId:
    model = build_model(mid)
    params = nominal_parameters(mid)
    current = c_rate_current(params, 0.3)
    pack = build_pack(model, params, impl=_core_py)
    y0 = initial_state(model, params)
    t_max = 2.0 * 3600.0 * 1.672 * params.m0[0] / current
    t0 = time.perf_counter()
    res = _core_py.simulate_core(
        pack, y0, current, t_max, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12,
        1e-6, 30.0, max(1e-13, 1e-8 * current),
    )
    wall = time.perf_counter() - t0
    cap = res["t_end"] * current / 3600.0 * 1000.0 / params.m0[0]
    print(
        f"{mid.name}: term={res['termination']} t_end={res['t_end']:.1f}s "
        f"cap={cap:.1f} mAh/g V0={res['v'][0]:.4f} "
        f"Vmid={res['v'][len(res['v'])//2]:.4f} eps_end={res['y'][-1][-1]:.4f} "
        f"steps={res['naccept']}/{res['nreject']} nfev={res['nfev']} "
        f"njac={res['njac']} ng={res['nsolve']} wall={wall:.2f}s"
    )
