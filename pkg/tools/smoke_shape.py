"""Scratch driver: print V at fixed capacity fractions (curve shape)."""

import sys

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

for name in ("M1", "M3"):
    mid = ModelId[name]
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
    v = res["v"]
    cap = t * current / 3.6 / params.m0[0]
    print(f"--- {name}: {len(t)} samples, cap_end={cap[-1]:.0f}")
    fracs = [0.001, 0.01, 0.02, 0.05, 0.08, 0.12, 0.16, 0.20, 0.22, 0.24,
             0.25, 0.26, 0.28, 0.30, 0.35, 0.40, 0.50, 0.70, 0.90, 0.99]
    line = []
    for fr in fracs:
        k = np.searchsorted(cap, fr * cap[-1])
        k = min(k, len(v) - 1)
        line.append(f"{100 * fr:5.1f}%: {v[k]:.4f}")
    for i in range(0, len(line), 5):
        print("    " + "  ".join(line[i:i + 5]))
