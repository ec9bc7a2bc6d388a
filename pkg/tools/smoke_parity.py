"""Probe: twin-run similitude margins for all four models at mu=3.33e4."""
import time

from liscell.engine import SimulationConfig
from liscell.parameters import c_rate_current, nominal_parameters
from liscell.similitude import verify_similitude

MU = 3.33e4

for mid in (1, 2, 3, 4):
    params = nominal_parameters(mid)
    cfg = SimulationConfig(current=c_rate_current(params, 0.2))
    t0 = time.perf_counter()
    rep = verify_similitude(mid, params, cfg, MU)
    dt = time.perf_counter() - t0
    print(f"M{mid}: passed={rep.passed}  v_margin={rep.v_margin:.3g}  "
          f"mass_margin={rep.mass_margin:.3g}  dur_rel={rep.duration_reldiff:.3g}  "
          f"v_sup={rep.v_sup_diff:.3g} V  "
          f"T=({rep.model_trace.t_end:.1f},{rep.proto_trace.t_end:.1f})  [{dt:.2f}s]")
