"""Constant-current discharge integration of the cell's reduced DAE.

The model is a semi-explicit DAE: dissolved masses, precipitate mass and
relative porosity evolve by ODEs whose right-hand side depends on the cell
voltage, itself pinned at every instant by the requirement that the
per-reaction currents sum to the applied current.  The engine eliminates the
algebraic layer pointwise (the current balance is strictly monotone in V, so
the voltage is a well-defined implicit function of the state) and integrates
the remaining stiff ODE with an adaptive Rosenbrock scheme.

The heavy lifting lives in the kernel backends (:mod:`liscell.kernel`); this
module owns the user-facing types, the input validation, and the trace
bookkeeping.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel
from .catalog import ModelId, ReactionModel, build_model
from .parameters import SULFUR_CAPACITY_MAH_G, ParameterSet

__all__ = [
    "Termination",
    "SimulationConfig",
    "CellState",
    "AlgebraicOutputs",
    "SimulationTrace",
    "EngineError",
    "NoBracket",
    "NonFinite",
    "DegenerateState",
    "solve_constraints",
    "state_derivative",
    "potential_rate",
    "simulate",
]


class EngineError(Exception):
    """Base class for algebraic-layer failures."""


class NoBracket(EngineError):
    """The current balance has no root inside the physical voltage window.

    Typically signals a nearly-depleted species or a collapsed porosity: the
    available reactions cannot carry the requested current at any voltage in
    [0, 5] V.
    """


class NonFinite(EngineError):
    """Overflow or invalid state while evaluating the algebraic layer."""


class DegenerateState(EngineError):
    """A participating species mass is too small for a meaningful rate."""


class Termination(enum.Enum):
    """Why a simulation stopped."""

    VOLTAGE_CUTOFF = "voltage_cutoff"
    POROSITY_FLOOR = "porosity_floor"
    SPECIES_DEPLETED = "species_depleted"
    HORIZON = "horizon"
    SOLVER_FAILURE = "solver_failure"


# kernel termination codes, in kernel order
_TERMINATIONS = (
    Termination.VOLTAGE_CUTOFF,
    Termination.POROSITY_FLOOR,
    Termination.SPECIES_DEPLETED,
    Termination.HORIZON,
    Termination.SOLVER_FAILURE,
)


@dataclass(frozen=True)
class SimulationConfig:
    """Numerical settings for one constant-current discharge.

    Attributes
    ----------
    current : float
        Discharge current I [A], positive.
    t_max : float or None
        Time horizon [s].  ``None`` defaults to twice the theoretical
        discharge duration of the initial S8 loading at this current.
    v_cutoff : float
        Terminal voltage [V]; crossing it ends the run.
    eps_min : float
        Relative-porosity floor; at or below it the reactions are considered
        blocked and the run ends.
    rtol, atol : float
        Integrator tolerances; ``atol`` applies to the dissolved masses [g].
    atol_msp : float
        Absolute tolerance for the precipitate mass [g].  Much tighter than
        ``atol`` so the seed's early near-exponential growth from ~1e-6 g is
        resolved relatively, not absorbed into an absolute band.
    atol_eps : float
        Absolute tolerance for the dimensionless porosity.
    dt_init, dt_max : float
        Initial and maximal step size [s].
    constraint_tol : float or None
        Residual tolerance on the current balance [A]; ``None`` defaults to
        ``1e-8 * current`` with a 1e-13 floor.
    max_steps : int or None
        Budget on attempted (accepted plus rejected) integrator steps; a run
        that exhausts it stops as a solver failure with its partial trace.
        ``None`` leaves only the 2e6 backstop.  Fitting uses a small budget
        so pathological candidates fail fast instead of grinding.
    """

    current: float
    t_max: float | None = None
    v_cutoff: float = 1.5
    eps_min: float = 1e-3
    rtol: float = 1e-6
    atol: float = 1e-9
    atol_msp: float = 1e-15
    atol_eps: float = 1e-12
    dt_init: float = 1e-6
    dt_max: float = 30.0
    constraint_tol: float | None = None
    max_steps: int | None = None

    def validate(self) -> None:
        if not self.current > 0.0:
            raise ValueError(f"current must be positive, got {self.current}")
        if not 0.0 < self.eps_min < 1.0:
            raise ValueError(f"eps_min must be in (0, 1), got {self.eps_min}")
        for name in ("rtol", "atol", "atol_msp", "atol_eps", "dt_init", "dt_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.t_max is not None and not self.t_max > 0.0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.constraint_tol is not None and not self.constraint_tol > 0.0:
            raise ValueError("constraint_tol must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")

    def resolved_max_steps(self) -> int:
        return 2_000_000 if self.max_steps is None else self.max_steps

    def resolved_constraint_tol(self) -> float:
        if self.constraint_tol is not None:
            return self.constraint_tol
        return max(1e-8 * self.current, 1e-13)

    def resolved_t_max(self, params: ParameterSet) -> float:
        if self.t_max is not None:
            return self.t_max
        # twice the theoretical discharge duration of the S8 loading
        full = SULFUR_CAPACITY_MAH_G * 1e-3 * 3600.0 * params.m0[0] / self.current
        return 2.0 * full


@dataclass(frozen=True)
class CellState:
    """Instantaneous state: dissolved masses, precipitate, porosity, time."""

    m: np.ndarray  # [g], length q, S8 first
    m_sp: float  # [g]
    eps: float  # relative porosity
    t: float = 0.0  # [s]

    @staticmethod
    def initial(model: ReactionModel, params: ParameterSet) -> "CellState":
        return CellState(
            m=np.array(params.m0, dtype=float),
            m_sp=float(params.m_sp0),
            eps=1.0,
            t=0.0,
        )


@dataclass(frozen=True)
class CellRates:
    """Time derivative of :class:`CellState`."""

    dm: np.ndarray  # [g/s]
    dm_sp: float  # [g/s]
    deps: float  # [1/s]


@dataclass(frozen=True)
class AlgebraicOutputs:
    """The eliminated algebraic layer at one instant.

    Invariants: ``eta[j] = v - e[j]`` exactly (computed that way), and the
    per-reaction currents sum to the applied current within the constraint
    tolerance used by the solve.
    """

    v: float  # cell voltage [V]
    e: np.ndarray  # reduction potentials [V], length p
    eta: np.ndarray  # overpotentials [V], length p
    i_r: np.ndarray  # per-reaction currents [A], length p
    a_v: float  # active area [m^2]


class SimulationTrace:
    """Result of one discharge simulation.

    Samples are stored as arrays (one row per accepted integrator step, plus
    an interpolated terminal sample when a stop condition was crossed
    mid-step); :meth:`samples` iterates them as
    ``(t, CellState, AlgebraicOutputs)`` tuples.
    """

    def __init__(self, model, params, config, current, res):
        self.model: ReactionModel = model
        self.params: ParameterSet = params
        self.config: SimulationConfig = config
        self.current: float = current
        self.termination: Termination = _TERMINATIONS[res["termination"]]
        self.t_end: float = res["t_end"]
        self.t: np.ndarray = res["t"]
        y = res["y"]
        q = model.n_species
        self.m: np.ndarray = y[:, :q]
        self.m_sp: np.ndarray = y[:, q]
        self.eps: np.ndarray = y[:, q + 1]
        self.v: np.ndarray = res["v"]
        self.e: np.ndarray = res["e"]
        self.eta: np.ndarray = res["eta"]
        self.i_r: np.ndarray = res["ir"]
        self.a_v: np.ndarray = res["av"]
        self.stats: dict = {
            k: res[k] for k in ("naccept", "nreject", "nfev", "njac", "nsolve", "nlu")
        }

    # -- capacity bookkeeping --------------------------------------------

    @property
    def discharged_capacity(self) -> float:
        """Total charge passed [Ah]."""
        return self.current * self.t_end / 3600.0

    @property
    def specific_capacity(self) -> float:
        """Capacity per gram of initial S8 [mAh/g]."""
        return self.current * self.t_end / 3.6 / self.params.m0[0]

    def capacity_axis(self) -> np.ndarray:
        """Per-sample specific capacity [mAh/g of initial S8]."""
        return self.t * (self.current / 3.6 / self.params.m0[0])

    @property
    def failed(self) -> bool:
        return self.termination is Termination.SOLVER_FAILURE

    def __len__(self) -> int:
        return len(self.t)

    def state_at(self, k: int) -> CellState:
        return CellState(
            m=self.m[k].copy(), m_sp=float(self.m_sp[k]),
            eps=float(self.eps[k]), t=float(self.t[k]),
        )

    def outputs_at(self, k: int) -> AlgebraicOutputs:
        return AlgebraicOutputs(
            v=float(self.v[k]), e=self.e[k].copy(), eta=self.eta[k].copy(),
            i_r=self.i_r[k].copy(), a_v=float(self.a_v[k]),
        )

    def samples(self):
        """Iterate ``(t, CellState, AlgebraicOutputs)`` per stored sample."""
        for k in range(len(self.t)):
            yield float(self.t[k]), self.state_at(k), self.outputs_at(k)

    # -- export ------------------------------------------------------------

    def csv_header(self) -> list[str]:
        names = self.model.species_names
        p = self.model.n_reactions
        cols = ["t_s", "V", "eps", "m_Sp"]
        cols += [f"m_{n}" for n in names]
        cols += [f"i_{j + 1}" for j in range(p)]
        cols += [f"E_{j + 1}" for j in range(p)]
        cols += [f"eta_{j + 1}" for j in range(p)]
        cols.append("capacity_mAh_per_g")
        return cols

    def to_csv(self, path) -> None:
        """Write the trace as CSV (shortest round-trip float formatting)."""
        cap = self.capacity_axis()
        q = self.model.n_species
        p = self.model.n_reactions
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.csv_header()) + "\n")
            for k in range(len(self.t)):
                row = [self.t[k], self.v[k], self.eps[k], self.m_sp[k]]
                row += [self.m[k, i] for i in range(q)]
                row += [self.i_r[k, j] for j in range(p)]
                row += [self.e[k, j] for j in range(p)]
                row += [self.eta[k, j] for j in range(p)]
                row.append(cap[k])
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _state_vector(state: CellState) -> list[float]:
    return [float(v) for v in state.m] + [float(state.m_sp), float(state.eps)]


def solve_constraints(
    model: ReactionModel,
    params: ParameterSet,
    state: CellState,
    current: float,
    constraint_tol: float | None = None,
    vguess: float = -1.0,
) -> AlgebraicOutputs:
    """Solve the algebraic layer at one state for the applied current.

    Returns the voltage closing the current balance together with the
    per-reaction potentials, overpotentials and currents.

    Raises
    ------
    NoBracket
        If no voltage in [0, 5] V can carry the requested current.
    NonFinite
        On overflow or a non-physical state (porosity <= 0).
    """
    params.validate(model)
    ctol = constraint_tol
    if ctol is None:
        ctol = max(1e-8 * abs(current), 1e-13)
    impl = kernel.backend()
    pack = kernel.build_pack(model, params, impl=impl)
    status, v, av, e, eta, ir = impl.solve_once(
        pack, _state_vector(state), current, ctol, vguess
    )
    if status == kernel.SOLVE_NO_BRACKET:
        raise NoBracket(
            f"current balance for I={current} A has no root in [0, 5] V"
        )
    if status != kernel.SOLVE_OK:
        raise NonFinite("algebraic layer evaluation did not stay finite")
    return AlgebraicOutputs(v=v, e=e, eta=eta, i_r=ir, a_v=av)


def state_derivative(
    model: ReactionModel,
    params: ParameterSet,
    state: CellState,
    alg: AlgebraicOutputs,
) -> CellRates:
    """Mass and porosity rates given a consistent algebraic layer.

    Each reaction current feeds its participating species in proportion to
    the stoichiometry; the final species additionally loses mass to
    precipitation, which in turn consumes porosity.
    """
    q = model.n_species
    c = params.constants
    sto = model.stoich_array()
    n_s = model.sulfur_counts()
    ne = np.array(model.electrons, dtype=float)
    weights = (n_s[:, None] * c.molar_mass_s) / (ne[None, :] * c.faraday) * sto
    dm = weights @ alg.i_r
    dm_sp = params.k_p * state.m_sp * (state.m[q - 1] - params.s_sat)
    dm[q - 1] -= dm_sp
    return CellRates(dm=dm, dm_sp=float(dm_sp), deps=float(-params.omega * dm_sp))


def potential_rate(
    model: ReactionModel,
    params: ParameterSet,
    state: CellState,
    alg: AlgebraicOutputs,
    rates: CellRates,
    atol: float = 1e-9,
) -> np.ndarray:
    """Time derivative of each reduction potential along the trajectory.

    Differentiating the concentration form of the potential gives, per
    reaction, ``dE_j/dt = -(R T)/(n_j F) * sum_i s_ij * (dm_i/dt) / m_i``:
    the reference constants inside the logarithm are time-independent, so
    only the relative mass rates survive.  Diverges to -inf as a consumed
    species' mass approaches zero, which is exactly the plateau-end drop
    diagnostic this function exists for.

    Raises
    ------
    DegenerateState
        If a species participating in reaction ``j`` has mass below ``atol``;
        the rate would be dominated by representation noise.
    """
    q = model.n_species
    p = model.n_reactions
    c = params.constants
    out = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(q):
            s = float(model.stoich[i][j])
            if s == 0.0:
                continue
            mi = float(state.m[i])
            if mi < atol:
                raise DegenerateState(
                    f"mass of {model.species[i].name} ({mi:g} g) below "
                    f"{atol:g} g in reaction {j + 1}"
                )
            acc += s * float(rates.dm[i]) / mi
        out[j] = -(c.gas * c.temperature) / (model.electrons[j] * c.faraday) * acc
    return out


def simulate(
    model: ReactionModel | ModelId | int,
    params: ParameterSet,
    config: SimulationConfig,
) -> SimulationTrace:
    """Integrate one constant-current discharge from the initial state.

    Never raises for numerical trouble: a run that cannot proceed is returned
    as a partial trace with ``termination == Termination.SOLVER_FAILURE``.
    """
    if not isinstance(model, ReactionModel):
        model = build_model(model)
    params.validate(model)
    config.validate()
    impl = kernel.backend()
    pack = kernel.build_pack(model, params, impl=impl)
    y0 = kernel.initial_state(model, params)
    res = impl.simulate_core(
        pack,
        y0,
        config.current,
        config.resolved_t_max(params),
        config.v_cutoff,
        config.eps_min,
        config.rtol,
        config.atol,
        config.atol_msp,
        config.atol_eps,
        config.dt_init,
        config.dt_max,
        config.resolved_constraint_tol(),
        config.resolved_max_steps(),
    )
    return SimulationTrace(model, params, config, config.current, res)
