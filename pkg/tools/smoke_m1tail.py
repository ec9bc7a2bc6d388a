"""Scratch driver: M1's trailing samples before the depletion event."""

import sys

sys.path.insert(0, "/root/pkg/src")

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

mid = ModelId.M1
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
ir = res["ir"]
print(f"term={res['termination']} t_end={res['t_end']:.2f} I={current:.4f}")
print(f"{'t':>10} {'dt':>8} {'m_S8':>11} {'m_S4':>10} {'V':>8} "
      f"{'ir1':>11} {'ir2':>11}")
n = len(t)
for k in range(max(0, n - 25), n):
    dt = t[k] - t[k - 1] if k else 0.0
    print(f"{t[k]:10.2f} {dt:8.3f} {y[k][0]:11.4e} {y[k][1]:10.4e} "
          f"{v[k]:8.4f} {ir[k][0]:11.4e} {ir[k][1]:11.4e}")
