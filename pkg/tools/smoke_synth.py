"""Scratch driver: M3 at the identified (Table-3-style) parameters."""

import sys
import time

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import nominal_parameters

mid = ModelId.M3
model = build_model(mid)

p = nominal_parameters(mid, m0_s8=3.038)
p = p.set("E0[1]", 2.467, model)
p = p.set("E0[2]", 2.374, model)
p = p.set("E0[3]", 2.342, model)
p = p.set("E0[4]", 2.069, model)
p = p.set("gamma", 0.483, model)
p = p.set("omega", 0.613, model)

current = 0.0300e-3 * 3.33e4  # prototype 0.03 mA at scale 3.33e4

t0 = time.time()
pack = build_pack(model, p, impl=_core_py)
y0 = initial_state(model, p)
res = _core_py.simulate_core(
    pack, y0, current, 6.0 * 3600.0, 1.5, 1e-3,
    1e-6, 1e-9, 1e-15, 1e-12, 1e-6, 30.0, 1e-8 * current,
)
t = res["t"]
v = res["v"]
y = res["y"]
term = res["termination"]
cap = t[-1] * current / 3.6 / p.m0[0]
print(f"I={current:.4f} A  term={term}  t_end={res['t_end']:.1f} s "
      f"({res['t_end'] / 3600:.2f} h)")
print(f"spec cap={cap:.1f} mAh/g  V0={v[0]:.4f}  V_end={v[-1]:.4f}")
print(f"eps_end={y[-1, -1]:.5f}  m_Sp_end={y[-1, -2]:.4f} g")
print(f"samples={len(t)}  naccept={res['naccept']}  nreject={res['nreject']}")

# voltage at fractional times, for a feel of the plateau structure
for f in (0.02, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.99):
    ti = f * t[-1]
    print(f"  V({f:4.0%} T) = {np.interp(ti, t, v):.4f}")
print(f"wall: {time.time() - t0:.1f} s")
