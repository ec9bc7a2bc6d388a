"""Probe: does the twin verifier catch planted scaling bugs?"""
import liscell.similitude as sim
from liscell.catalog import build_model
from liscell.engine import SimulationConfig
from liscell.parameters import c_rate_current, nominal_parameters

real_scale = sim.scale_parameters
MODEL = build_model(3)

def corrupt(field, fac):
    def patched(params, mu, direction):
        out = real_scale(params, mu, direction)
        return out.set(field, out.get(field, MODEL) * fac, MODEL)
    return patched

params = nominal_parameters(3)
cfg = SimulationConfig(current=c_rate_current(params, 0.2))
for field, fac in (("omega", 1.01), ("i0[1]", 1.01), ("v", 1.001),
                   ("m0[S8]", 1.001)):
    sim.scale_parameters = corrupt(field, fac)
    try:
        rep = sim.verify_similitude(3, params, cfg, 3.33e4)
        print(f"{field} x{fac}: passed={rep.passed}  v_margin={rep.v_margin:.3g} "
              f"mass_margin={rep.mass_margin:.3g}  dur_rel={rep.duration_reldiff:.3g}")
    finally:
        sim.scale_parameters = real_scale
