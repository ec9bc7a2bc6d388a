"""Scratch driver: dip + plateau + slope-ratio morphology at nominal seeds."""

import sys

sys.path.insert(0, "/root/pkg/src")

import numpy as np

from liscell import _core_py
from liscell.catalog import ModelId, build_model
from liscell.kernel import build_pack, initial_state
from liscell.parameters import c_rate_current, nominal_parameters

PROM_MIN = 2.5e-4  # V


def medfilt(x, w=21):
    n = len(x)
    half = w // 2
    out = np.empty(n)
    for k in range(n):
        a = max(0, k - half)
        b = min(n, k + half + 1)
        out[k] = np.median(x[a:b])
    return out


def prominent_maxima(x, prom):
    """Indices of local maxima with topographic prominence >= prom.
    Boundary samples are candidates too (maxima of the half-line)."""
    n = len(x)
    cand = [0]
    for k in range(1, n - 1):
        if x[k] > x[k - 1] and x[k] >= x[k + 1]:
            cand.append(k)
    if n >= 2:
        cand.append(n - 1)
    keep = []
    for k in cand:
        saddles = []
        floor_seen = x[k]
        for step in (-1, 1):
            # walk until a sample genuinely higher than the candidate
            # (exceedances below the prominence threshold are noise);
            # a side without higher terrain contributes no saddle
            lowest = x[k]
            i = k + step
            while 0 <= i < n and x[i] < x[k] + prom:
                if x[i] < lowest:
                    lowest = x[i]
                i += step
            if 0 <= i < n:
                saddles.append(lowest)
            if lowest < floor_seen:
                floor_seen = lowest
        ref = max(saddles) if saddles else floor_seen
        if x[k] - ref >= prom:
            keep.append(k)
    return keep


for mid in ModelId:
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
    cap = t * current / 3.6 / params.m0[0]  # mAh/g
    vf = medfilt(v)
    maxima = prominent_maxima(vf, PROM_MIN)
    print(f"--- {mid.name}: term={res['termination']} "
          f"cap_end={cap[-1]:.1f} ({(cap[-1] - 1675) / 16.75:+.2f}%) "
          f"maxima at {[f'{100 * cap[k] / cap[-1]:.0f}%' for k in maxima]}")
    if len(maxima) < 2:
        print("    NO DIP (bracket empty)")
        continue
    lo, hi = maxima[0], maxima[-1]
    seg = np.arange(lo, hi + 1)
    dip = seg[np.argmin(vf[seg])]
    depth_mv = (min(vf[lo], vf[hi]) - vf[dip]) * 1e3
    if depth_mv < PROM_MIN * 1e3:
        print("    NO DIP (valley too shallow)")
        continue

    # slope windows by capacity fraction of the high plateau, raw gradients
    # (the median filter would blunt the cliff it is meant to measure)
    cap_dip = cap[dip]
    dv = np.gradient(v[:dip + 1], cap[:dip + 1])
    c_hp = cap[:dip + 1]
    mid_w = (c_hp >= cap_dip / 3.0) & (c_hp <= 2.0 * cap_dip / 3.0)
    term_w = c_hp >= 0.9 * cap_dip
    mid_slope = np.median(np.abs(dv[mid_w]))
    term_slope = np.max(np.abs(dv[term_w]))
    ratio = term_slope / mid_slope if mid_slope > 0 else float("inf")

    lp_mask = np.zeros(len(v), dtype=bool)
    lp_mask[dip + 1:] = True
    lp_mask &= vf > 1.5 + 0.05
    lp_mean = float(np.mean(vf[lp_mask])) if lp_mask.any() else float("nan")
    hp_mean = float(np.mean(vf[:dip + 1]))

    print(f"    dip @ cap={cap[dip]:7.1f} ({100 * cap[dip] / cap[-1]:.0f}%) "
          f"V={vf[dip]:.4f}  depth={depth_mv:6.2f} mV  "
          f"recover={(vf[hi] - vf[dip]) * 1e3:6.2f} mV")
    print(f"    plateau means: high={hp_mean:.4f} low={lp_mean:.4f}  "
          f"V0={v[0]:.4f}")
    print(f"    slopes mV/(mAh/g): mid={mid_slope * 1e3:9.4f} "
          f"terminal={term_slope * 1e3:9.4f}  ratio={ratio:8.1f}")
