"""Scratch probe: per-evaluation simulation cost inside the fitting loop.

Compares the current fit-time solver settings against looser candidates on
(a) accuracy at the synthetic-truth parameters and (b) wall-clock over a
random sample of the M2 search box, which dominates the four-model suite.
"""

import dataclasses
import time

import numpy as np

from liscell.catalog import build_model
from liscell.engine import SimulationConfig, simulate
from liscell.identify import (
    _FIT_SIM_DEFAULTS,
    FitProblem,
    default_theta_spec,
    load_experiment,
    objective,
)
from liscell.parameters import nominal_parameters

DATA = "tests/data/synthetic_m3.csv"
CURRENT = 0.999

TRUE = {
    "E0[1]": 2.467,
    "E0[2]": 2.374,
    "E0[3]": 2.342,
    "E0[4]": 2.069,
    "gamma": 0.483,
    "omega": 0.613,
    "m0[S8]": 3.038,
}


def theta_true(model, params):
    return np.array(list(TRUE.values()))


def build_problem(sim):
    data = load_experiment(DATA, current=CURRENT)
    model = build_model(3)
    params = nominal_parameters(3)
    return FitProblem(
        model_id=3,
        data=data,
        theta_spec=default_theta_spec(model, params),
        fixed=params,
        sim=sim,
    )


def sim_at_truth(cfg_kwargs, label):
    model = build_model(3)
    params = nominal_parameters(3)
    for path, val in TRUE.items():
        params = params.set(path, val, model)
    cfg = dataclasses.replace(_FIT_SIM_DEFAULTS, current=CURRENT, t_max=23800.0, **cfg_kwargs)
    t0 = time.perf_counter()
    tr = simulate(3, params, cfg)
    wall = time.perf_counter() - t0
    print(
        f"{label:28s} naccept={tr.stats['naccept']:6d} nreject={tr.stats['nreject']:5d} "
        f"t_end={tr.t_end:9.1f} term={tr.termination.name:16s} wall={wall * 1e3:7.1f} ms"
    )
    return tr


def main():
    data = load_experiment(DATA, current=CURRENT)

    ref = sim_at_truth(dict(rtol=1e-8, atol=1e-11, dt_max=20.0), "reference rtol=1e-8")
    vref = np.interp(data.t, ref.t, ref.v)

    for kwargs, label in [
        (dict(), "fit now (rtol=1e-5,dt60)"),
        (dict(rtol=3e-5), "rtol=3e-5"),
        (dict(rtol=1e-4), "rtol=1e-4"),
        (dict(rtol=1e-4, dt_max=120.0), "rtol=1e-4,dt120"),
        (dict(rtol=3e-4, dt_max=120.0), "rtol=3e-4,dt120"),
    ]:
        tr = sim_at_truth(kwargs, label)
        v = np.interp(data.t, tr.t, tr.v)
        dv = np.abs(v - vref)
        print(
            f"    max|dV|={dv.max() * 1e3:6.3f} mV  rms dV={np.sqrt((dv ** 2).mean()) * 1e3:6.3f} mV  "
            f"dT_end={tr.t_end - ref.t_end:+7.1f} s"
        )

    # J at truth under each candidate config
    for kwargs, label in [
        (dict(), "fit now"),
        (dict(rtol=1e-4, dt_max=120.0), "rtol=1e-4,dt120"),
        (dict(rtol=3e-4, dt_max=120.0), "rtol=3e-4,dt120"),
    ]:
        prob = build_problem(dataclasses.replace(_FIT_SIM_DEFAULTS, current=1.0, **kwargs))
        model = build_model(3)
        th = theta_true(model, prob.fixed)
        j = objective(prob, th)
        print(f"J(truth) {label:18s} = {j:.6f}")

    # wall-clock over the M2 search box (what the suite actually pays for)
    model2 = build_model(2)
    params2 = nominal_parameters(2)
    data2 = load_experiment(DATA, current=CURRENT)
    spec2 = default_theta_spec(model2, params2)
    lo = np.array([s[1] for s in spec2])
    hi = np.array([s[2] for s in spec2])
    rng = np.random.default_rng(123)
    thetas = lo + (hi - lo) * rng.random((120, len(spec2)))

    for kwargs, label in [
        (dict(), "fit now"),
        (dict(max_steps=5000), "max_steps=5k"),
        (dict(rtol=1e-4, dt_max=120.0), "rtol=1e-4,dt120"),
        (dict(rtol=1e-4, dt_max=120.0, max_steps=5000), "rtol=1e-4,dt120,5k"),
    ]:
        prob = FitProblem(
            model_id=2,
            data=data2,
            theta_spec=spec2,
            fixed=params2,
            sim=dataclasses.replace(_FIT_SIM_DEFAULTS, current=1.0, **kwargs),
        )
        walls = []
        n_pen = 0
        pen = prob.penalty()
        t0 = time.perf_counter()
        for th in thetas:
            t1 = time.perf_counter()
            j = objective(prob, th)
            walls.append(time.perf_counter() - t1)
            if j >= pen:
                n_pen += 1
        total = time.perf_counter() - t0
        walls = np.array(walls)
        print(
            f"M2 box {label:20s} mean={walls.mean() * 1e3:7.1f} ms  median={np.median(walls) * 1e3:6.1f} ms  "
            f"p90={np.quantile(walls, 0.9) * 1e3:7.1f} ms  max={walls.max() * 1e3:7.1f} ms  "
            f"penalties={n_pen}/120  total={total:.1f} s"
        )


if __name__ == "__main__":
    main()
