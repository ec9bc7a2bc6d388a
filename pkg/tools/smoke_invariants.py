"""Scratch driver: dip shape, conservation, constraint residual."""

import sys

sys.path.insert(0, "/root/pkg/src")

import numpy as np

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
    ctol = max(1e-13, 1e-8 * current)
    res = _core_py.simulate_core(
        pack, y0, current, 24000.0, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, ctol,
    )
    t = res["t"]
    v = res["v"]
    y = res["y"]
    ir = res["ir"]
    q = model.n_species

    # conservation: total sulfur-bearing mass fixed
    total0 = y[0, : q + 1].sum()
    drift = np.abs(y[:, : q + 1].sum(axis=1) - total0).max()

    # constraint residual at every accepted sample
    resid = np.abs(ir.sum(axis=1) - current).max()

    # dip: global min in the first half, flanked by higher voltage
    half = len(v) // 2
    k = int(np.argmin(v[:half]))
    dip_v = v[k]
    dip_t = t[k]
    recover = v[k:half].max() - dip_v

    # porosity monotone?
    eps = y[:, q + 1]
    eps_inc = np.max(np.diff(eps)) if len(eps) > 1 else 0.0

    # terminal vs mid slope (crude): |dV/dt| at end vs low-plateau middle
    dv = np.abs(np.diff(v) / np.diff(t))
    mid = dv[int(len(dv) * 0.6)]
    print(
        f"{mid := mid and mid}" if False else
        f"{ModelId(mid if isinstance(mid, int) else mid).name if False else model.model_id.name}: "
        f"drift={drift:.3e} resid={resid:.3e} "
        f"dip V={dip_v:.4f}@{dip_t:.0f}s recover={recover * 1000:.1f}mV "
        f"eps_max_inc={eps_inc:.2e} "
        f"V_end={v[-1]:.3f} slope_end={dv[-1]:.2e} slope_mid={dv[int(len(dv) * 0.6)]:.2e}"
    )
