import numpy as np
import pytest

from liscell.features import MIN_SAMPLES, extract_features, trace_features


def synthetic_curve():
    """Piecewise discharge curve with every landmark at a known place.

    High plateau with slope -5e-5, steep descent into a dip at capacity 400,
    partial recovery, low plateau with slope -1e-4, terminal cliff.
    """
    cap = np.linspace(0.0, 1000.0, 1001)
    v = np.empty_like(cap)
    high = cap <= 380.0
    v[high] = 2.40 - 5e-5 * cap[high]
    desc = (cap > 380.0) & (cap <= 400.0)
    v[desc] = 2.381 - 1.655e-2 * (cap[desc] - 380.0)
    rec = (cap > 400.0) & (cap <= 420.0)
    v[rec] = 2.050 + 5e-3 * (cap[rec] - 400.0)
    low = (cap > 420.0) & (cap <= 950.0)
    v[low] = 2.150 - 1e-4 * (cap[low] - 420.0)
    cliff = cap > 950.0
    v[cliff] = 2.097 - 1.194e-2 * (cap[cliff] - 950.0)
    return cap, v


def test_synthetic_curve_landmarks():
    cap, v = synthetic_curve()
    f = extract_features(cap, v)
    assert f.has_dip
    # the median filter quantizes a sharp V-apex by a few samples
    assert 390.0 <= f.dip_capacity <= 410.0
    assert f.dip_voltage == pytest.approx(2.050, abs=0.05)
    assert f.high_plateau_mean == pytest.approx(2.385, abs=0.01)
    assert f.low_plateau_mean == pytest.approx(2.12, abs=0.03)
    assert f.mid_plateau_slope == pytest.approx(5e-5, rel=0.05)
    assert f.terminal_slope == pytest.approx(1.655e-2, rel=0.05)
    assert f.slope_ratio == pytest.approx(331.0, rel=0.1)


def test_dip_survives_subprominence_noise():
    cap, v = synthetic_curve()
    rng = np.random.default_rng(5)
    noisy = v + rng.uniform(-1e-4, 1e-4, size=v.shape)
    f = extract_features(cap, noisy)
    assert f.has_dip
    assert 385.0 <= f.dip_capacity <= 415.0


def test_monotone_decline_has_no_dip():
    cap = np.linspace(0.0, 500.0, 600)
    v = 2.4 - 1e-3 * cap
    f = extract_features(cap, v)
    assert not f.has_dip
    assert f.dip_voltage is None
    assert f.dip_capacity is None
    assert f.high_plateau_mean is None
    assert f.slope_ratio is None


def test_noise_alone_does_not_invent_a_dip():
    cap = np.linspace(0.0, 500.0, 600)
    rng = np.random.default_rng(11)
    v = 2.4 - 1e-3 * cap + rng.uniform(-1e-4, 1e-4, size=600)
    assert not extract_features(cap, v).has_dip


def test_input_validation():
    cap = np.linspace(0.0, 10.0, MIN_SAMPLES - 1)
    with pytest.raises(ValueError):
        extract_features(cap, np.full(MIN_SAMPLES - 1, 2.0))
    with pytest.raises(ValueError):
        extract_features(np.arange(20.0), np.zeros(19))
    backwards = np.linspace(10.0, 0.0, 20)
    with pytest.raises(ValueError):
        extract_features(backwards, np.full(20, 2.0))


# ---------------------------------------------------------------------------
# morphology of the simulated chains


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_nominal_morphology(mid, nominal_trace):
    trace = nominal_trace(mid)
    f = trace_features(trace)
    assert f.has_dip
    assert f.high_plateau_mean > f.low_plateau_mean
    assert f.dip_voltage < f.high_plateau_mean
    # the dip is a genuine local minimum: the curve recovers after it
    after = trace.v[f.dip_index : f.dip_index + 200]
    assert after.max() > f.dip_voltage
    # and it sits at the stage handover, well inside the first half
    assert 200.0 <= f.dip_capacity <= 700.0
    assert f.mid_plateau_slope is not None and f.mid_plateau_slope > 0.0
    assert f.terminal_slope is not None


def test_high_plateau_cliff_separates_chains(nominal_trace):
    # the short chain ends its high plateau almost vertically; the longer
    # chains hand over with a finite milder slope
    assert trace_features(nominal_trace(1)).slope_ratio > 50.0
    assert trace_features(nominal_trace(3)).slope_ratio < 50.0
    assert trace_features(nominal_trace(4)).slope_ratio < 50.0


def test_trace_features_uses_capacity_axis(nominal_trace):
    trace = nominal_trace(2)
    direct = extract_features(trace.capacity_axis(), trace.v, v_cutoff=trace.config.v_cutoff)
    via = trace_features(trace)
    assert via == direct
