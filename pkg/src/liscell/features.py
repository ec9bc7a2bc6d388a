"""Discharge-curve feature extraction: plateaus, dip point, end-slope.

A polysulfide discharge curve carries three landmarks: a high voltage
plateau, a dip where the chemistry hands over between reduction stages, and
a low plateau.  The detector works on the voltage-vs-capacity curve after a
21-point median filter, finds its prominent local maxima, and takes the dip
as the global minimum between the first and last of them.  Traces without a
genuine dip (monotone decline, extreme perturbations) report the dip as
absent rather than inventing one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SimulationTrace

__all__ = ["TraceFeatures", "extract_features", "trace_features", "MIN_SAMPLES"]

# Median filter window (samples); odd, matched to typical step density.
_MEDFILT_WINDOW = 21

# Minimum prominence [V] for a local maximum to count as curve structure,
# and for a dip to count as present.  Integrator wobble on the plateaus
# stays well under this; the shallowest genuine dip across the four
# nominal chains is ~1.3 mV, a 5x margin.
_PROM_MIN = 2.5e-4

# A feature request needs at least this many samples to mean anything.
MIN_SAMPLES = 10

# Low-plateau membership: samples after the dip above cutoff + this margin.
_LOW_PLATEAU_MARGIN = 0.05

# Slope windows as fractions of the pre-dip capacity span: the mid-plateau
# slope is the median over the central third, the terminal slope the largest
# magnitude over the final tenth.
_MID_LO, _MID_HI = 1.0 / 3.0, 2.0 / 3.0
_TERMINAL_FRAC = 0.9


@dataclass(frozen=True)
class TraceFeatures:
    """Extracted landmarks of one voltage-vs-capacity curve.

    Dip fields are ``None`` when no dip of sufficient prominence exists;
    plateau and slope fields that require the dip are then ``None`` too.
    Slopes are in V per (mAh/g) against the capacity axis.
    """

    has_dip: bool
    dip_voltage: float | None
    dip_capacity: float | None
    dip_index: int | None
    high_plateau_mean: float | None
    low_plateau_mean: float | None
    mid_plateau_slope: float | None
    terminal_slope: float | None
    slope_ratio: float | None


def _median_filter(x: np.ndarray, window: int) -> np.ndarray:
    """Running median with shrinking (still centered) windows at the edges."""
    n = len(x)
    half = window // 2
    out = np.empty(n)
    for k in range(n):
        lo = max(0, k - half)
        hi = min(n, k + half + 1)
        out[k] = np.median(x[lo:hi])
    return out


def _prominent_maxima(x: np.ndarray, prom: float) -> list[int]:
    """Indices of local maxima with at least ``prom`` prominence.

    Candidates are the interior local maxima plus both endpoints.  A
    candidate's prominence is its height over the higher of the two saddles
    reached by walking each direction until strictly higher terrain; a walk
    that runs off the array contributes no saddle (for the global maximum
    the reference level is the lowest sample anywhere).
    """
    n = len(x)
    candidates = [0]
    for k in range(1, n - 1):
        if x[k] > x[k - 1] and x[k] >= x[k + 1]:
            candidates.append(k)
    candidates.append(n - 1)

    kept = []
    floor_seen = float(np.min(x))
    for k in candidates:
        saddles = []
        for step in (-1, 1):
            i = k + step
            lowest = x[k]
            while 0 <= i < n and x[i] < x[k] + prom:
                if x[i] < lowest:
                    lowest = x[i]
                i += step
            if 0 <= i < n:  # stopped at genuinely higher terrain
                saddles.append(lowest)
        ref = max(saddles) if saddles else floor_seen
        if x[k] - ref >= prom:
            kept.append(k)
    return kept


def _pair_slopes(cap: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Secant slopes between consecutive distinct-capacity samples.

    Vertical sampling (near-identical capacities during a cliff) would make
    two-point slopes blow up on representation noise, so pairs closer than a
    sliver of the capacity span are dropped.
    """
    dcap = np.diff(cap)
    dv = np.diff(v)
    span = float(cap[-1] - cap[0])
    keep = dcap > max(1e-15, 1e-9 * span)
    mids = 0.5 * (cap[:-1] + cap[1:])
    return mids[keep], dv[keep] / dcap[keep]


def extract_features(
    capacity: np.ndarray, voltage: np.ndarray, v_cutoff: float = 1.5
) -> TraceFeatures:
    """Extract plateau/dip features from a voltage-vs-capacity curve.

    ``capacity`` must be non-decreasing with at least :data:`MIN_SAMPLES`
    samples.
    """
    cap = np.asarray(capacity, dtype=float)
    v = np.asarray(voltage, dtype=float)
    if cap.shape != v.shape or cap.ndim != 1:
        raise ValueError("capacity and voltage must be 1-D arrays of equal length")
    if len(cap) < MIN_SAMPLES:
        raise ValueError(
            f"need at least {MIN_SAMPLES} samples, got {len(cap)}"
        )
    if np.any(np.diff(cap) < 0.0):
        raise ValueError("capacity axis must be non-decreasing")

    vf = _median_filter(v, _MEDFILT_WINDOW)
    maxima = _prominent_maxima(vf, _PROM_MIN)

    absent = TraceFeatures(
        has_dip=False, dip_voltage=None, dip_capacity=None, dip_index=None,
        high_plateau_mean=None, low_plateau_mean=None,
        mid_plateau_slope=None, terminal_slope=None, slope_ratio=None,
    )
    if len(maxima) < 2:
        return absent
    lo, hi = maxima[0], maxima[-1]
    if hi - lo < 2:
        return absent
    dip = lo + int(np.argmin(vf[lo:hi + 1]))
    depth = min(vf[lo], vf[hi]) - vf[dip]
    if depth < _PROM_MIN or dip == lo or dip == hi:
        return absent

    dip_cap = float(cap[dip])
    high = v[:dip]
    low_mask = v[dip + 1:] > v_cutoff + _LOW_PLATEAU_MARGIN
    low = v[dip + 1:][low_mask]

    mids, slopes = _pair_slopes(cap[:dip + 1], v[:dip + 1])
    mid_w = (mids >= _MID_LO * dip_cap) & (mids <= _MID_HI * dip_cap)
    term_w = mids >= _TERMINAL_FRAC * dip_cap
    mid_slope = float(np.median(np.abs(slopes[mid_w]))) if mid_w.any() else None
    term_slope = float(np.max(np.abs(slopes[term_w]))) if term_w.any() else None
    ratio = None
    if mid_slope is not None and term_slope is not None and mid_slope > 0.0:
        ratio = term_slope / mid_slope

    return TraceFeatures(
        has_dip=True,
        dip_voltage=float(v[dip]),
        dip_capacity=dip_cap,
        dip_index=dip,
        high_plateau_mean=float(np.mean(high)) if len(high) else None,
        low_plateau_mean=float(np.mean(low)) if len(low) else None,
        mid_plateau_slope=mid_slope,
        terminal_slope=term_slope,
        slope_ratio=ratio,
    )


def trace_features(trace: SimulationTrace) -> TraceFeatures:
    """Extract features from a simulation trace (capacity axis implied)."""
    return extract_features(
        trace.capacity_axis(), trace.v, v_cutoff=trace.config.v_cutoff
    )
