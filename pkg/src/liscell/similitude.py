"""Similitude scaling between prototype (coin-cell) and model scale.

The dynamics are invariant under a charge scale factor mu: scaling every
mass and the current by mu, the electrolyte volume by mu, the active area by
mu^(2/3) and the exchange-current prefactors by mu^(1/3) (the area/length
split of the charge dimension), and the two mass-rate constants omega and
k_p by 1/mu leaves the voltage trajectory unchanged while masses scale
linearly.  Potentials, the porosity exponent, temperature and time carry no
charge dimension and are untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .catalog import ModelId, ReactionModel, build_model
from .engine import SimulationConfig, SimulationTrace, simulate
from .parameters import ParameterSet

__all__ = [
    "ScaleFactor",
    "Direction",
    "scale_parameters",
    "scale_current",
    "scale_config",
    "SimilitudeReport",
    "verify_similitude",
]


@dataclass(frozen=True)
class ScaleFactor:
    """Charge scale factor between prototype and model scale."""

    mu: float

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")


class Direction(enum.Enum):
    PROTO_TO_MODEL = "proto_to_model"
    MODEL_TO_PROTO = "model_to_proto"


# exponent of mu applied to each scaled ParameterSet field (prototype ->
# model direction); everything absent is invariant
_FIELD_EXPONENTS = {
    "i0": 1.0 / 3.0,
    "a_v0": 2.0 / 3.0,
    "v": 1.0,
    "omega": -1.0,
    "k_p": -1.0,
    "s_sat": 1.0,
    "m0": 1.0,
    "m_sp0": 1.0,
}


def _apply(value, factor):
    if isinstance(value, tuple):
        return tuple(x * factor for x in value)
    return value * factor


def scale_parameters(
    params: ParameterSet, mu: ScaleFactor | float, direction: Direction
) -> ParameterSet:
    """Rescale a parameter set across the charge similitude.

    The inverse direction divides by the identical factors, so a round trip
    reproduces every field to rounding error.
    """
    m = mu.mu if isinstance(mu, ScaleFactor) else float(mu)
    if not m > 0.0:
        raise ValueError(f"mu must be positive, got {m}")
    updates = {}
    for name, expo in _FIELD_EXPONENTS.items():
        factor = m ** expo
        value = getattr(params, name)
        if direction is Direction.PROTO_TO_MODEL:
            updates[name] = _apply(value, factor)
        else:
            updates[name] = (
                tuple(x / factor for x in value)
                if isinstance(value, tuple)
                else value / factor
            )
    return replace(params, **updates)


def scale_current(current: float, mu: ScaleFactor | float,
                  direction: Direction) -> float:
    """Rescale a current (charge per unit time; time is unscaled)."""
    m = mu.mu if isinstance(mu, ScaleFactor) else float(mu)
    if direction is Direction.PROTO_TO_MODEL:
        return current * m
    return current / m


def scale_config(config: SimulationConfig, mu: ScaleFactor | float,
                 direction: Direction) -> SimulationConfig:
    """Rescale a simulation config consistently with the parameters.

    Current and the mass-error weights carry the charge dimension; time
    bounds, voltage cutoff, porosity floor and the dimensionless porosity
    tolerance do not.  A constraint tolerance left at its default re-derives
    from the scaled current by itself.
    """
    m = mu.mu if isinstance(mu, ScaleFactor) else float(mu)
    factor = m if direction is Direction.PROTO_TO_MODEL else 1.0 / m
    return replace(
        config,
        current=config.current * factor,
        atol=config.atol * factor,
        atol_msp=config.atol_msp * factor,
        constraint_tol=(
            None if config.constraint_tol is None
            else config.constraint_tol * factor
        ),
    )


# The comparison stops short of the terminal collapse: the stop event is
# localized by the step sequence, whose phase differs between the twin runs,
# so the final fraction of the discharge carries an end-time jitter of a few
# steps that no tolerance shrinks.
_TERMINAL_EXCLUDE = 0.02

# End-time agreement bound as a fraction of the shorter duration.
_DURATION_RTOL = 5e-3

# Tolerance-refinement factor for the self-calibration runs.
_REFINE = 10.0


def _local_slope(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-sample bound on |dx/dt|: the larger neighboring secant slope."""
    dt = np.diff(t)
    dt[dt <= 0.0] = np.inf
    sl = np.abs(np.diff(x)) / dt
    out = np.empty_like(x)
    out[0] = sl[0] if len(sl) else 0.0
    out[-1] = sl[-1] if len(sl) else 0.0
    if len(sl) > 1:
        out[1:-1] = np.maximum(sl[:-1], sl[1:])
    return out


def _envelope_excess(t_ref: np.ndarray, x_ref: np.ndarray,
                     t_q: np.ndarray, x_q: np.ndarray) -> np.ndarray:
    """How far each query point sticks out of the reference corridor.

    For a query node at time t the corridor is the closed interval spanned
    by the reference trace's two bracketing node values; the excess is the
    distance to that interval (zero inside).  Comparing node-against-
    corridor never interpolates either solution, so long accepted steps
    cannot masquerade as twin disagreement, and the corridor width reflects
    exactly what the stepper resolved locally.
    """
    idx = np.clip(np.searchsorted(t_ref, t_q, side="right") - 1,
                  0, len(t_ref) - 2)
    lo = np.minimum(x_ref[idx], x_ref[idx + 1])
    hi = np.maximum(x_ref[idx], x_ref[idx + 1])
    return np.maximum(np.maximum(x_q - hi, lo - x_q), 0.0)


def _moving_max(t: np.ndarray, x: np.ndarray, w: float) -> np.ndarray:
    """Running maximum of x over the time window [t-w, t+w]."""
    lo = np.searchsorted(t, t - w, side="left")
    hi = np.searchsorted(t, t + w, side="right")
    out = np.empty_like(x)
    for k in range(len(x)):
        out[k] = np.max(x[lo[k]:hi[k]])
    return out


def _self_deviation(run: SimulationTrace, fine: SimulationTrace,
                    w: float) -> dict:
    """Pointwise deviation of a run from its tolerance-refined rerun.

    Envelope excess of the run's nodes against the refined run's corridor,
    max-smoothed over +-w so locally decohered stretches read as a band
    rather than a spike train.  This measures the uncertainty the
    integrator's tolerance actually leaves in each quantity at each point
    of the trajectory — including stretches where local instability (the
    precipitation onset, the final sharp drop) amplifies it far beyond the
    nominal local-error budget.
    """
    fields = {"v": _moving_max(run.t, _envelope_excess(fine.t, fine.v,
                                                       run.t, run.v), w)}
    for i in range(run.m.shape[1]):
        fields[i] = _moving_max(
            run.t, _envelope_excess(fine.t, fine.m[:, i], run.t, run.m[:, i]),
            w)
    return fields


@dataclass(frozen=True)
class SimilitudeReport:
    """Outcome of a model-vs-prototype twin simulation.

    ``v_margin`` / ``mass_margin`` are sup-norms of the corridor excess
    (see ``_envelope_excess``; the comparison runs both ways) divided by a
    pointwise allowance; at or below 1 the two computed solutions agree
    within 5x the uncertainty the integrator tolerance leaves in them.
    That allowance is 5x the sum of the deterministic tolerance band —
    rtol*|x| plus the timing part rtol*t*|dx/dt|, since a feature crossed
    with slope dx/dt is only localized to ~rtol*t in time — and the
    measured self-deviation of each run from its own tolerance-refined
    rerun (see ``_self_deviation``), which captures how local instability
    amplifies the tolerance along the trajectory.  The window excludes the
    terminal collapse (final 2% of the shorter run), where the stop
    event's step-quantized timing dominates; end times are compared
    separately.
    """

    mu: float
    v_sup_diff: float  # plain sup-norm voltage excess on the window [V]
    v_margin: float  # sup of voltage excess / allowance; passes at <= 1
    mass_margin: float  # same for tolerance-weighted masses
    duration_reldiff: float  # |T_mod - T_pro| / min(T)
    model_trace: SimulationTrace
    proto_trace: SimulationTrace

    @property
    def passed(self) -> bool:
        return (self.v_margin <= 1.0 and self.mass_margin <= 1.0
                and self.duration_reldiff <= _DURATION_RTOL)


def verify_similitude(
    model_id: ModelId | int | ReactionModel,
    params: ParameterSet,
    config: SimulationConfig,
    mu: ScaleFactor | float,
) -> SimilitudeReport:
    """Simulate at the given (model) scale and at prototype scale, compare.

    The prototype run uses parameters, current and mass tolerances divided
    by mu.  Each run's nodes are then held against the corridor the other
    run computed (masses mapped across scales by mu), with the allowance
    described on ``SimilitudeReport``; two further tolerance-refined runs
    calibrate that allowance.
    """
    m = mu.mu if isinstance(mu, ScaleFactor) else float(mu)
    model = (model_id if isinstance(model_id, ReactionModel)
             else build_model(model_id))

    trace_mod = simulate(model, params, config)
    params_pro = scale_parameters(params, m, Direction.MODEL_TO_PROTO)
    config_pro = scale_config(config, m, Direction.MODEL_TO_PROTO)
    trace_pro = simulate(model, params_pro, config_pro)

    t_short = min(trace_mod.t_end, trace_pro.t_end)
    dur_rel = abs(trace_mod.t_end - trace_pro.t_end) / t_short
    t_hi = (1.0 - _TERMINAL_EXCLUDE) * t_short

    # self-calibration: rerun both twins with every tolerance tightened
    # tenfold; each run's deviation from its refined rerun is the measured
    # uncertainty its tolerance left in the solution
    fine = replace(config, rtol=config.rtol / _REFINE,
                   atol=config.atol / _REFINE,
                   atol_msp=config.atol_msp / _REFINE,
                   atol_eps=config.atol_eps / _REFINE)
    w = max(2.0 * config.dt_max, 0.005 * t_short)
    self_mod = _self_deviation(trace_mod, simulate(model, params, fine), w)
    self_pro = _self_deviation(
        trace_pro,
        simulate(model, params_pro,
                 scale_config(fine, m, Direction.MODEL_TO_PROTO)),
        w)

    v_sup = 0.0
    v_margin = 0.0
    mass_margin = 0.0
    # each pair compares at the reference run's scale: the query trace's
    # masses are multiplied by `factor` to land there, and the absolute
    # tolerance floor is the one that applied at that scale
    pairs = ((trace_mod, trace_pro, self_mod, self_pro, m, config.atol),
             (trace_pro, trace_mod, self_pro, self_mod, 1.0 / m,
              config.atol / m))
    for ref, qry, self_ref, self_qry, factor, atol_ref in pairs:
        keep = qry.t <= t_hi
        tq = qry.t[keep]
        xq = qry.v[keep]
        sl_v = np.maximum(
            np.interp(tq, ref.t, _local_slope(ref.t, ref.v)),
            _local_slope(qry.t, qry.v)[keep])
        dev_v = np.maximum(np.interp(tq, ref.t, self_ref["v"]),
                           np.interp(tq, qry.t, self_qry["v"]))
        ex = _envelope_excess(ref.t, ref.v, tq, xq)
        allow = 5.0 * (config.rtol * (np.abs(xq) + tq * sl_v) + dev_v)
        v_sup = max(v_sup, float(np.max(ex)))
        v_margin = max(v_margin, float(np.max(ex / allow)))
        for i in range(model.n_species):
            mq = qry.m[keep, i] * factor
            sl_m = np.maximum(
                np.interp(tq, ref.t, _local_slope(ref.t, ref.m[:, i])),
                _local_slope(qry.t, qry.m[:, i])[keep] * factor)
            dev_m = np.maximum(
                np.interp(tq, ref.t, self_ref[i]),
                np.interp(tq, qry.t, self_qry[i]) * factor)
            ex = _envelope_excess(ref.t, ref.m[:, i], tq, mq)
            allow = 5.0 * (atol_ref + dev_m
                           + config.rtol * (np.abs(mq) + tq * sl_m))
            mass_margin = max(mass_margin, float(np.max(ex / allow)))

    return SimilitudeReport(
        mu=m,
        v_sup_diff=v_sup,
        v_margin=v_margin,
        mass_margin=mass_margin,
        duration_reldiff=dur_rel,
        model_trace=trace_mod,
        proto_trace=trace_pro,
    )
