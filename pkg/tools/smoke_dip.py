"""Scratch driver: inspect the plateau-transition region closely."""

import sys

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

for mid in (ModelId.M1, ModelId.M2):
    model = build_model(mid)
    params = nominal_parameters(mid)
    current = c_rate_current(params, 0.3)
    pack = build_pack(model, params, impl=_core_py)
    y0 = initial_state(model, params)
    res = _core_py.simulate_core(
        pack, y0, current, 24000.0, 1.5, 1e-3,
        1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, 1e-8 * current,
    )
    t = res["t"]
    v = res["v"]
    y = res["y"]
    q = model.n_species
    msp = y[:, q]
    mq = y[:, q - 1]
    # supersaturation onset: first time m_Sp starts growing fast
    grow = np.where(msp > 1e-3)[0]
    k0 = grow[0] if len(grow) else len(t) - 1
    print(f"--- {model.model_id.name}: precipitation takeoff at t={t[k0]:.0f}s")
    # is V locally non-monotone anywhere before 60% of the run?
    vmax_after = np.maximum.accumulate(v[::-1])[::-1]
    rec = vmax_after - v  # recovery available after each point
    cut = int(0.6 * len(t))
    kk = int(np.argmax(rec[:cut]))
    print(f"    max recovery before 60%: {rec[kk]*1e3:.3f} mV at t={t[kk]:.0f}s V={v[kk]:.4f}")
    sel = slice(max(0, k0 - 6), min(len(t), k0 + 10))
    for ti, vi, mi, si in zip(t[sel], v[sel], mq[sel], msp[sel]):
        print(f"    t={ti:8.1f}  V={vi:.5f}  m_q={mi:.3e}  m_Sp={si:.3e}")
