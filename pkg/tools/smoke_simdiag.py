"""Probe: top envelope-excess points per model for the twin comparison."""
import numpy as np

from liscell.catalog import build_model
from liscell.engine import SimulationConfig, simulate
from liscell.parameters import c_rate_current, nominal_parameters
from liscell.similitude import (Direction, _envelope_excess, _local_slope,
                                scale_config, scale_parameters)

MU = 3.33e4

for mid in (1, 2, 3, 4):
    model = build_model(mid)
    params = nominal_parameters(mid)
    cfg = SimulationConfig(current=c_rate_current(params, 0.2))
    tm = simulate(model, params, cfg)
    tp = simulate(model, scale_parameters(params, MU, Direction.MODEL_TO_PROTO),
                  scale_config(cfg, MU, Direction.MODEL_TO_PROTO))
    t_short = min(tm.t_end, tp.t_end)
    t_hi = 0.98 * t_short

    print(f"=== M{mid}  (T={t_short:.0f}) ===")
    for tag, ref, qry, factor, atol_ref in (
            ("pro-vs-mod", tm, tp, MU, cfg.atol),
            ("mod-vs-pro", tp, tm, 1.0 / MU, cfg.atol / MU)):
        keep = qry.t <= t_hi
        tq = qry.t[keep]
        xq = qry.v[keep]
        sl = np.maximum(np.interp(tq, ref.t, _local_slope(ref.t, ref.v)),
                        _local_slope(qry.t, qry.v)[keep])
        ex = _envelope_excess(ref.t, ref.v, tq, xq)
        allow = 5.0 * cfg.rtol * (np.abs(xq) + tq * sl)
        marg = ex / allow
        for k in np.argsort(marg)[-3:][::-1]:
            if marg[k] < 0.05:
                break
            print(f"  V {tag}: margin={marg[k]:.3g} t={tq[k]:.1f} "
                  f"({tq[k]/t_short*100:.2f}%) ex={ex[k]:.3g} slope={sl[k]:.3g}")
        worst = (0.0, "", 0.0, 0.0, 0.0)
        for i in range(model.n_species):
            mq = qry.m[keep, i] * factor
            ex = _envelope_excess(ref.t, ref.m[:, i], tq, mq)
            rel = ex / np.maximum(np.abs(mq), atol_ref)
            k = int(np.argmax(rel))
            if rel[k] > worst[0]:
                worst = (float(rel[k]), model.species_names[i], tq[k],
                         float(ex[k]), float(mq[k]))
        print(f"  m {tag}: worst rel excess={worst[0]:.3g} ({worst[1]}) "
              f"t={worst[2]:.1f} ({worst[2]/t_short*100:.2f}%) "
              f"ex={worst[3]:.3g} m={worst[4]:.3g}")
