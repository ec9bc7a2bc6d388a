"""Scratch driver: which species hits the concentration floor, and when."""

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
    res = _core_py.simulate_core(
        pack, y0, current, 48000.0, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, 1e-8 * current,
    )
    t = res["t"]
    y = res["y"]
    v = res["v"]
    q = model.n_species
    names = model.species_names
    floors = pack.floor_mass
    cap = res["t_end"] * current / 3600.0 * 1000.0 / params.m0[0]
    print(f"--- {mid.name}: term={res['termination']} t_end={res['t_end']:.0f}s "
          f"cap={(cap - 1675) / 16.75:+.2f}% V_end={v[-1]:.3f}")
    yl = y[-1]
    for i in range(q):
        # first crossing time of 10x floor, if any
        below = np.where(y[:, i] <= 10 * floors[i])[0]
        tcross = f"t={t[below[0]]:.0f}s" if len(below) else "never"
        print(f"    {names[i]:7s} end={yl[i]:9.3e} floor={floors[i]:.1e} "
              f"10x-floor crossed: {tcross}")
    print(f"    m_Sp end={yl[q]:.4f} eps end={yl[q+1]:.4f}")
