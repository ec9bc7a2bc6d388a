"""Regenerate tests/data/synthetic_m3.csv.

A four-step-chain discharge at the identified parameter values, resampled on
a 10 s grid with 2 mV Gaussian read noise — the ground-truth dataset for the
identification tests.  The applied current (0.999 A) is the reference
experiment's 0.03 mA hold carried to cell scale (mu = 3.33e4) and is passed
to the loader as a flag, so the file itself stays two-column.
"""

from pathlib import Path

import numpy as np

from liscell.engine import SimulationConfig, simulate
from liscell.parameters import nominal_parameters

TRUE_E0 = (2.467, 2.374, 2.342, 2.069)
TRUE_GAMMA = 0.483
TRUE_OMEGA = 0.613
TRUE_M0_S8 = 3.038  # [g]
CURRENT = 0.999  # [A] = 0.03 mA * 3.33e4
SAMPLE_DT = 10.0  # [s]
NOISE_SD = 0.002  # [V]
NOISE_SEED = 7


def main() -> None:
    params = nominal_parameters(3, m0_s8=TRUE_M0_S8)
    from dataclasses import replace

    params = replace(params, e0=TRUE_E0, gamma=TRUE_GAMMA, omega=TRUE_OMEGA)
    trace = simulate(3, params, SimulationConfig(current=CURRENT))
    print(f"termination: {trace.termination.value} at {trace.t_end:.1f} s")

    t = np.arange(0.0, trace.t_end, SAMPLE_DT)
    v = np.interp(t, trace.t, trace.v)
    rng = np.random.default_rng(NOISE_SEED)
    v = v + rng.normal(0.0, NOISE_SD, size=len(t))

    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "synthetic_m3.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("t_s,V\n")
        for tk, vk in zip(t, v):
            fh.write(f"{float(tk)!r},{float(vk)!r}\n")
    print(f"wrote {len(t)} samples to {out}")


if __name__ == "__main__":
    main()
