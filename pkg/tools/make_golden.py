"""Regenerate tests/golden: the four nominal 0.3C discharge traces.

Run only when a deliberate behavior change is made; the regression test
compares future traces against these files at tight tolerance.
"""

import json
from pathlib import Path

from liscell.engine import SimulationConfig, simulate
from liscell.parameters import c_rate_current, nominal_parameters

C_RATE = 0.3


def main() -> None:
    root = Path(__file__).resolve().parents[1] / "tests" / "golden"
    root.mkdir(parents=True, exist_ok=True)
    meta = {}
    for mid in (1, 2, 3, 4):
        params = nominal_parameters(mid)
        config = SimulationConfig(current=c_rate_current(params, C_RATE))
        trace = simulate(mid, params, config)
        out = root / f"m{mid}_nominal.csv"
        trace.to_csv(out)
        meta[f"m{mid}"] = {
            "termination": trace.termination.value,
            "rows": len(trace),
            "t_end": trace.t_end,
            "specific_capacity": trace.specific_capacity,
        }
        print(f"M{mid}: {trace.termination.value:18s} rows={len(trace):5d} "
              f"capacity={trace.specific_capacity:.2f} mAh/g -> {out.name}")
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


if __name__ == "__main__":
    main()
