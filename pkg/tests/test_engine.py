"""Engine-level tests: algebraic layer, rates, integration invariants.

The voltage oracle below re-derives the current balance from the model
definition (Nernst potentials from concentration ratios, symmetric
Butler-Volmer currents against the porosity-scaled area) and solves it by
plain bisection — no shared code with the kernels beyond the catalog.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liscell.catalog import build_model
from liscell.engine import (
    CellState,
    DegenerateState,
    NoBracket,
    SimulationConfig,
    Termination,
    potential_rate,
    simulate,
    solve_constraints,
    state_derivative,
)
from liscell.parameters import c_rate_current, nominal_parameters

# ---------------------------------------------------------------------------
# independent oracle for the algebraic layer


def oracle_potentials(model, params, m):
    """Reduction potentials from the concentration form of the Nernst law."""
    c = params.constants
    rt_f = c.gas * c.temperature / c.faraday
    e = []
    for j in range(model.n_reactions):
        acc = 0.0
        for i, sp in enumerate(model.species):
            s = float(model.stoich[i][j])
            if s:
                conc_ref = sp.n_sulfur * c.molar_mass_s * params.v
                acc += s * math.log(m[i] / conc_ref)
        e.append(params.e0[j] - rt_f / model.electrons[j] * acc)
    return np.array(e)


def oracle_currents(model, params, m, eps, v):
    """Per-reaction currents at voltage v (symmetric Butler-Volmer)."""
    c = params.constants
    a_v = params.a_v0 * eps**params.gamma
    c_bv = c.faraday / (2.0 * c.gas * c.temperature)
    e = oracle_potentials(model, params, m)
    i_r = []
    for j in range(model.n_reactions):
        ell = 0.0
        for i in range(model.n_species):
            s = float(model.stoich[i][j])
            if s:
                ell += 0.5 * s * math.log(m[i] / params.m0[i])
        i_r.append(-2.0 * a_v * params.i0[j] * math.sinh(c_bv * (v - e[j]) + ell))
    return np.array(i_r)


def oracle_voltage(model, params, m, eps, current, tol=1e-12):
    """Bisection root of the current balance on [0, 5] V."""

    def g(v):
        return oracle_currents(model, params, m, eps, v).sum() - current

    lo, hi = 0.0, 5.0
    assert g(lo) > 0.0 > g(hi), "balance not bracketed"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# configuration plumbing


def test_config_validation():
    SimulationConfig(current=1.0).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=0.0).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=1.0, eps_min=1.0).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=1.0, rtol=-1e-6).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=1.0, t_max=0.0).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=1.0, constraint_tol=0.0).validate()
    with pytest.raises(ValueError):
        SimulationConfig(current=1.0, max_steps=0).validate()


def test_resolved_constraint_tol():
    assert SimulationConfig(current=2.0).resolved_constraint_tol() == 2e-8
    # floor guards microscopic currents
    assert SimulationConfig(current=1e-9).resolved_constraint_tol() == 1e-13
    assert SimulationConfig(current=1.0, constraint_tol=3e-7).resolved_constraint_tol() == 3e-7


def test_resolved_t_max():
    params = nominal_parameters(1)
    cfg = SimulationConfig(current=1.0, t_max=123.0)
    assert cfg.resolved_t_max(params) == 123.0
    # default horizon: twice the theoretical full-discharge time
    cfg = SimulationConfig(current=2.0)
    expected = 2.0 * 1672.0e-3 * 3600.0 * params.m0[0] / 2.0
    assert cfg.resolved_t_max(params) == pytest.approx(expected, rel=1e-12)


def test_resolved_max_steps():
    assert SimulationConfig(current=1.0).resolved_max_steps() == 2_000_000
    assert SimulationConfig(current=1.0, max_steps=77).resolved_max_steps() == 77


# ---------------------------------------------------------------------------
# algebraic layer


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_voltage_solve_matches_bisection_oracle(mid):
    model = build_model(mid)
    params = nominal_parameters(mid)
    state = CellState.initial(model, params)
    current = c_rate_current(params, 0.3)

    alg = solve_constraints(model, params, state, current)
    v_ref = oracle_voltage(model, params, state.m, state.eps, current)

    assert alg.v == pytest.approx(v_ref, abs=1e-9)
    np.testing.assert_allclose(
        alg.e, oracle_potentials(model, params, state.m), rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(
        alg.i_r,
        oracle_currents(model, params, state.m, state.eps, alg.v),
        rtol=1e-9,
        atol=1e-15,
    )


def test_solve_constraints_residual_and_eta():
    model = build_model(3)
    params = nominal_parameters(3)
    state = CellState.initial(model, params)
    current = c_rate_current(params, 0.3)

    alg = solve_constraints(model, params, state, current)
    assert abs(alg.i_r.sum() - current) <= 1e-8 * current
    # overpotentials are defined as the literal difference
    np.testing.assert_array_equal(alg.eta, alg.v - alg.e)
    assert alg.a_v == params.a_v0 * state.eps**params.gamma


def test_balance_strictly_decreasing_in_v():
    model = build_model(4)
    params = nominal_parameters(4)
    state = CellState.initial(model, params)
    vs = np.linspace(0.2, 4.8, 200)
    g = [oracle_currents(model, params, state.m, state.eps, v).sum() for v in vs]
    assert all(a > b for a, b in zip(g, g[1:]))


def test_no_bracket_when_kinetics_cannot_carry_current():
    model = build_model(1)
    params = nominal_parameters(1)
    params = params.set("i0[1]", 1e-300, model).set("i0[2]", 1e-300, model)
    state = CellState.initial(model, params)
    with pytest.raises(NoBracket):
        solve_constraints(model, params, state, 1.0)


def test_tighter_constraint_tol_respected():
    model = build_model(2)
    params = nominal_parameters(2)
    state = CellState.initial(model, params)
    alg = solve_constraints(model, params, state, 1.0, constraint_tol=1e-12)
    assert abs(alg.i_r.sum() - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# rates


@given(
    f_s8=st.floats(0.5, 2.0),
    f_seed=st.floats(0.2, 5.0),
    f_msp=st.floats(0.1, 10.0),
    eps=st.floats(0.05, 1.0),
    c_rate=st.floats(0.05, 1.0),
)
@settings(max_examples=60, deadline=None, derandomize=True)
def test_mass_rates_balance_precipitation(f_s8, f_seed, f_msp, eps, c_rate):
    # total dissolved mass changes only by what precipitates: the
    # electrochemical part of the rate matrix moves sulfur between species
    model = build_model(3)
    params = nominal_parameters(3)
    m = np.array(params.m0)
    m[0] *= f_s8
    m[1:] *= f_s8 * f_seed
    state = CellState(m=m, m_sp=params.m_sp0 * f_msp, eps=eps)
    current = c_rate_current(params, c_rate)

    alg = solve_constraints(model, params, state, current)
    rates = state_derivative(model, params, state, alg)

    scale = max(np.abs(rates.dm).max(), abs(rates.dm_sp), 1e-30)
    assert abs(rates.dm.sum() + rates.dm_sp) <= 1e-12 * scale
    assert rates.deps == -params.omega * rates.dm_sp


def test_precipitation_rate_form():
    model = build_model(2)
    params = nominal_parameters(2)
    m = np.array(params.m0)
    m[-1] = 5.0 * params.s_sat  # supersaturated monomer
    state = CellState(m=m, m_sp=2e-5, eps=0.9)
    alg = solve_constraints(model, params, state, c_rate_current(params, 0.3))
    rates = state_derivative(model, params, state, alg)
    expected = params.k_p * state.m_sp * (state.m[-1] - params.s_sat)
    assert rates.dm_sp == pytest.approx(expected, rel=1e-15)
    assert rates.dm_sp > 0.0


def test_potential_rate_matches_finite_difference():
    model = build_model(3)
    params = nominal_parameters(3)
    state = CellState.initial(model, params)
    current = c_rate_current(params, 0.3)
    alg = solve_constraints(model, params, state, current)
    rates = state_derivative(model, params, state, alg)

    de = potential_rate(model, params, state, alg, rates)

    h = 1e-3  # seconds; masses move ~1e-7 g, well inside the linear regime
    e_plus = oracle_potentials(model, params, state.m + h * rates.dm)
    e_minus = oracle_potentials(model, params, state.m - h * rates.dm)
    fd = (e_plus - e_minus) / (2.0 * h)
    np.testing.assert_allclose(de, fd, rtol=1e-2, atol=1e-12)


def test_potential_rate_rejects_vanishing_mass():
    model = build_model(1)
    params = nominal_parameters(1)
    m = np.array(params.m0)
    m[1] = 1e-12
    state = CellState(m=m, m_sp=params.m_sp0, eps=1.0)
    alg_like = solve_constraints(model, params, CellState.initial(model, params), 1.0)
    rates = state_derivative(model, params, CellState.initial(model, params), alg_like)
    with pytest.raises(DegenerateState):
        potential_rate(model, params, state, alg_like, rates)


# ---------------------------------------------------------------------------
# full integrations


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_nominal_discharge_invariants(mid, nominal_trace):
    trace = nominal_trace(mid)
    current = trace.current
    ctol = trace.config.resolved_constraint_tol()

    assert not trace.failed
    assert trace.termination is Termination.SPECIES_DEPLETED

    # current balance holds at every stored sample
    resid = np.abs(trace.i_r.sum(axis=1) - current)
    assert resid.max() <= ctol

    # conservation is structural; drift is rounding, not truncation
    total = trace.m.sum(axis=1) + trace.m_sp
    drift = np.abs(total - total[0]).max()
    bound = (trace.stats["naccept"] + 2) * np.finfo(float).eps * total[0]
    assert drift <= bound

    # porosity only falls (to local integrator error), masses stay positive
    assert np.diff(trace.eps).max() <= 1e-8
    assert trace.eps[-1] < 1.0
    assert trace.eps.min() > 0.0
    assert trace.m.min() > 0.0
    assert trace.m_sp.min() > 0.0

    # overpotential definition survives the trip through the trace arrays
    np.testing.assert_array_equal(trace.eta, trace.v[:, None] - trace.e)


def test_voltage_cutoff_termination():
    params = nominal_parameters(2)
    config = SimulationConfig(current=c_rate_current(params, 0.3), v_cutoff=2.2)
    trace = simulate(2, params, config)
    assert trace.termination is Termination.VOLTAGE_CUTOFF
    assert trace.v[-1] == pytest.approx(2.2, abs=1e-3)
    assert trace.t_end < 4000.0  # cut during the dip descent


def test_horizon_termination():
    params = nominal_parameters(1)
    config = SimulationConfig(current=c_rate_current(params, 0.3), t_max=500.0)
    trace = simulate(1, params, config)
    assert trace.termination is Termination.HORIZON
    assert trace.t_end == pytest.approx(500.0, abs=1e-9)
    assert trace.t[-1] == pytest.approx(500.0, abs=1e-9)


def test_porosity_floor_termination():
    # gentle pore clogging: precipitate wins before any species runs out
    model = build_model(3)
    params = nominal_parameters(3, m0_s8=3.038)
    params = params.set("gamma", 0.483, model).set("omega", 0.613, model)
    config = SimulationConfig(current=c_rate_current(params, 0.3))
    trace = simulate(3, params, config)
    assert trace.termination is Termination.POROSITY_FLOOR
    assert trace.eps[-1] == pytest.approx(config.eps_min, abs=1e-6)
    assert trace.eps[0] == 1.0


def test_extreme_porosity_collapse_fails_gracefully():
    # far above nominal omega the collapse accelerates until the dead-S8
    # equilibrium tail is too stiff to step across; the run must come back
    # as a failure with its partial trace, never an exception
    model = build_model(1)
    params = nominal_parameters(1).set("omega", 3.0, model)
    trace = simulate(1, params, SimulationConfig(current=c_rate_current(params, 0.3)))
    assert trace.failed
    assert len(trace) > 100
    assert 0.0 < trace.eps[-1] < 0.02


def test_step_budget_exhaustion_is_solver_failure():
    params = nominal_parameters(1)
    config = SimulationConfig(current=c_rate_current(params, 0.3), max_steps=50)
    trace = simulate(1, params, config)
    assert trace.failed
    assert trace.termination is Termination.SOLVER_FAILURE
    assert trace.stats["naccept"] + trace.stats["nreject"] == 50
    assert len(trace) >= 2  # partial trace survives
    assert trace.t_end < 18000.0


def test_simulate_never_raises_on_dead_kinetics():
    # kinetics that cannot carry the current at any voltage: the very first
    # algebraic solve fails, so the trace is empty but flagged, not raised
    model = build_model(1)
    params = nominal_parameters(1)
    params = params.set("i0[1]", 1e-300, model).set("i0[2]", 1e-300, model)
    trace = simulate(1, params, SimulationConfig(current=1.0))
    assert trace.failed
    assert len(trace) == 0
    assert trace.t_end == 0.0


def test_refinement_convergence(nominal_trace):
    # halving tolerances must not move the plateau region; the terminal
    # cliff is excluded (its time location is the sensitive quantity there)
    coarse = nominal_trace(1)
    params = coarse.params
    fine = simulate(
        1,
        params,
        SimulationConfig(
            current=coarse.current,
            rtol=1e-8,
            atol=1e-11,
            atol_msp=1e-17,
            atol_eps=1e-14,
            dt_max=10.0,
        ),
    )
    t_end = min(coarse.t_end, fine.t_end)
    window = np.linspace(0.1 * t_end, 0.6 * t_end, 400)
    v_coarse = np.interp(window, coarse.t, coarse.v)
    v_fine = np.interp(window, fine.t, fine.v)
    assert np.abs(v_coarse - v_fine).max() <= 5e-4


def test_trace_csv_round_trip(tmp_path, nominal_trace):
    trace = nominal_trace(1)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)

    header = path.read_text().splitlines()[0].split(",")
    assert header == trace.csv_header()
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (len(trace), len(header))
    np.testing.assert_array_equal(data[:, 0], trace.t)
    np.testing.assert_array_equal(data[:, 1], trace.v)
    np.testing.assert_array_equal(data[:, 2], trace.eps)
    np.testing.assert_array_equal(data[:, 4 : 4 + trace.model.n_species], trace.m)


def test_capacity_bookkeeping(nominal_trace):
    trace = nominal_trace(2)
    assert trace.specific_capacity == pytest.approx(
        trace.current * trace.t_end / 3.6 / trace.params.m0[0], rel=1e-12
    )
    cap = trace.capacity_axis()
    assert cap[0] == 0.0
    assert cap[-1] == pytest.approx(trace.specific_capacity, rel=1e-9)
    assert trace.discharged_capacity == pytest.approx(
        trace.specific_capacity * trace.params.m0[0] / 1000.0, rel=1e-12
    )


def test_samples_iteration(nominal_trace):
    trace = nominal_trace(1)
    seen = 0
    for t, state, alg in trace.samples():
        if seen == 0:
            assert t == 0.0
            assert state.eps == 1.0
        seen += 1
        if seen > 3:
            break
    assert seen == 4


# ---------------------------------------------------------------------------
# randomized short-horizon property: the constraint and the conservation law
# hold for any positivity-respecting parameter neighborhood, not just nominal


@given(
    mid=st.integers(1, 4),
    f_i0=st.floats(0.3, 3.0),
    f_av=st.floats(0.3, 3.0),
    f_v=st.floats(0.5, 2.0),
    gamma=st.floats(0.1, 3.0),
    omega=st.floats(0.01, 1.0),
    f_kp=st.floats(0.2, 5.0),
    f_sat=st.floats(0.2, 5.0),
    f_m0=st.floats(0.5, 2.0),
    de0=st.floats(-0.05, 0.05),
)
@settings(max_examples=100, deadline=None, derandomize=True)
def test_constraint_and_conservation_randomized(
    mid, f_i0, f_av, f_v, gamma, omega, f_kp, f_sat, f_m0, de0
):
    model = build_model(mid)
    params = nominal_parameters(mid)
    params = params.set("m0[S8]", f_m0 * params.m0[0], model)
    for j in range(model.n_reactions):
        params = params.set(f"i0[{j + 1}]", f_i0 * params.i0[j], model)
        params = params.set(f"E0[{j + 1}]", params.e0[j] + de0, model)
    params = (
        params.set("a_v0", f_av, model)
        .set("v", f_v * params.v, model)
        .set("gamma", gamma, model)
        .set("omega", omega, model)
        .set("k_p", f_kp * params.k_p, model)
        .set("S_sat", f_sat * params.s_sat, model)
    )
    config = SimulationConfig(
        current=c_rate_current(params, 0.3), t_max=600.0, dt_max=10.0
    )
    trace = simulate(model, params, config)

    assert not trace.failed
    resid = np.abs(trace.i_r.sum(axis=1) - trace.current)
    assert resid.max() <= config.resolved_constraint_tol()

    total = trace.m.sum(axis=1) + trace.m_sp
    bound = (trace.stats["naccept"] + 2) * np.finfo(float).eps * total[0]
    assert np.abs(total - total[0]).max() <= bound
    assert trace.eps.min() > 0.0
    assert trace.m.min() > 0.0
