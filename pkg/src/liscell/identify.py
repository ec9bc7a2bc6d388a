"""Least-squares fitting of discharge curves by particle-swarm search.

The measured record and the simulation rarely end at the same instant, so
the misfit has three parts: squared voltage residuals at every measured
timestamp the simulation covers, a worst-case charge of (5 V)^2 for each
timestamp it fails to cover, and a weighted squared end-time mismatch.  The
uncovered-sample charge keeps early termination from being rewarded —
without it, truncating the residual sum to the covered samples makes "stop
immediately" cheaper than any fit with RMSE above the duration weight.

The swarm is a plain synchronous global-best PSO: inertia, cognitive and
social pulls, velocity clamping, reflecting bounds.  Every particle owns a
pre-split RNG stream, so the result is independent of the order in which
objective evaluations run; evaluations here are serial, but the contract
(and the bookkeeping) permits running each iteration's evaluations in
parallel with identical best-J.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .catalog import ModelId, ReactionModel, build_model
from .engine import SimulationConfig, SimulationTrace, simulate
from .parameters import ParameterSet, default_theta_paths
from .similitude import Direction, ScaleFactor, scale_current, scale_parameters

__all__ = [
    "ParseError",
    "ValidationError",
    "InvalidTheta",
    "AllFailed",
    "ChargeSegmentWarning",
    "ExperimentalTrace",
    "load_experiment",
    "PsoConfig",
    "FitProblem",
    "FitResult",
    "default_theta_spec",
    "objective",
    "fit",
    "write_fit_report",
]

# Worst-case voltage residual [V]: measured and simulated voltages both live
# in (0, 5) V, so no covered sample can cost more than this squared.
_RESIDUAL_CAP = 5.0


class ParseError(ValueError):
    """A data file could not be read; the message carries the line number."""


class ValidationError(ValueError):
    """Parsed data violates a record invariant (named in the message)."""


class InvalidTheta(ValueError):
    """Malformed candidate vector (wrong length, NaN/inf) — a programming
    error, unlike out-of-bounds values, which are merely penalized."""


class AllFailed(RuntimeError):
    """Every particle hit the penalty path in every iteration; the bounds or
    configuration make the problem infeasible."""


class ChargeSegmentWarning(UserWarning):
    """Measured voltage rises over more than 5% of the samples."""


# ---------------------------------------------------------------------------
# measured data


@dataclass(frozen=True)
class ExperimentalTrace:
    """A measured constant-current discharge record.

    ``t`` [s] must be strictly increasing with at least 10 samples and
    ``v`` [V] inside (0, 5).  ``current`` is the nominal applied current [A];
    ``current_bias`` is an additive instrument correction, so the effective
    discharge current is their sum.
    """

    t: np.ndarray
    v: np.ndarray
    current: float
    current_bias: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        if t.ndim != 1 or v.shape != t.shape:
            raise ValidationError("t and v must be 1-d arrays of equal length")
        if len(t) < 10:
            raise ValidationError(f"need at least 10 samples, got {len(t)}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError("samples must be finite")
        if not np.all(np.diff(t) > 0.0):
            k = int(np.argmin(np.diff(t) > 0.0))
            raise ValidationError(
                f"time not strictly increasing at sample {k + 1}"
            )
        if np.any(v <= 0.0) or np.any(v >= _RESIDUAL_CAP):
            k = int(np.argmax((v <= 0.0) | (v >= _RESIDUAL_CAP)))
            raise ValidationError(
                f"voltage outside (0, 5) V at sample {k}: {v[k]!r}"
            )
        if not self.effective_current > 0.0:
            raise ValidationError(
                "effective current (current + current_bias) must be positive, "
                f"got {self.effective_current!r}"
            )

    @property
    def effective_current(self) -> float:
        """Applied current with the additive bias correction [A]."""
        return self.current + self.current_bias

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        """Last measured timestamp [s] — the record's end time."""
        return float(self.t[-1])

    @property
    def rising_fraction(self) -> float:
        """Fraction of consecutive sample pairs where the voltage rises."""
        return float(np.mean(np.diff(self.v) > 0.0))

    @property
    def charge_warning(self) -> bool:
        """True when more than 5% of the samples rise — a possible charge
        segment, or simply sensor noise on a flat plateau."""
        return self.rising_fraction > 0.05

    def samples(self):
        """Iterate ``(t, v)`` pairs."""
        for k in range(len(self.t)):
            yield float(self.t[k]), float(self.v[k])


def load_experiment(
    path,
    format: str = "csv",
    current: float | None = None,
    current_bias: float = 0.0,
) -> ExperimentalTrace:
    """Read a measured discharge record.

    The CSV format is ``t_s,V`` with an optional third column ``I_A``; an
    explicit ``current`` argument overrides the column (the column's mean is
    used otherwise, since the record is a constant-current hold).  One of the
    two must supply the current.  Raises :class:`ParseError` with the
    offending line number for malformed input and :class:`ValidationError`
    for well-formed data that breaks a record invariant.
    """
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: line 1: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["t_s", "V"] or header[2:] not in ([], ["I_A"]):
        raise ParseError(
            f"{path}: line 1: expected header 't_s,V[,I_A]', got {lines[0]!r}"
        )
    ncols = len(header)
    t, v, i_col = [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != ncols:
            raise ParseError(
                f"{path}: line {lineno}: expected {ncols} fields, got {len(parts)}"
            )
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise ParseError(
                f"{path}: line {lineno}: non-numeric value in {raw!r}"
            ) from None
        t.append(row[0])
        v.append(row[1])
        if ncols == 3:
            i_col.append(row[2])
        if len(t) >= 2 and not t[-1] > t[-2]:
            raise ParseError(
                f"{path}: line {lineno}: time not strictly increasing "
                f"({t[-1]!r} after {t[-2]!r})"
            )
    if current is None:
        if not i_col:
            raise ValidationError(
                "no applied current: file has no I_A column and no current "
                "was given"
            )
        current = float(np.mean(i_col))
    meta = {"path": str(path), "format": format, "rows": len(t)}
    if i_col:
        meta["i_col_range"] = (min(i_col), max(i_col))
    trace = ExperimentalTrace(
        t=np.asarray(t), v=np.asarray(v), current=current,
        current_bias=current_bias, meta=meta,
    )
    if trace.charge_warning:
        warnings.warn(
            f"{path}: voltage rises over {100 * trace.rising_fraction:.1f}% "
            "of samples — charge segment or noisy plateau",
            ChargeSegmentWarning,
            stacklevel=2,
        )
    return trace


# ---------------------------------------------------------------------------
# problem statement


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyperparameters.

    ``max_iters`` counts objective sweeps including the initial evaluation,
    so ``max_iters = 1`` scores the random swarm and moves nothing.
    ``v_max_frac`` clamps each velocity component to that fraction of the
    bound range.  The search stops early after ``stall_iters`` consecutive
    iterations whose best-J improvement is below ``stall_tol`` (relative).
    """

    swarm_size: int = 50
    max_iters: int = 300
    w: float = 0.72
    c1: float = 1.49
    c2: float = 1.49
    v_max_frac: float = 0.2
    seed: int = 0
    stall_iters: int = 50
    stall_tol: float = 1e-6

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if not 0.0 < self.w < 1.0:
            raise ValueError(f"inertia w must be in (0, 1), got {self.w}")
        if not (self.c1 > 0.0 and self.c2 > 0.0):
            raise ValueError("c1 and c2 must be positive")
        if not 0.0 < self.v_max_frac <= 1.0:
            raise ValueError(
                f"v_max_frac must be in (0, 1], got {self.v_max_frac}"
            )
        if self.max_iters < 1 or self.stall_iters < 1:
            raise ValueError("max_iters and stall_iters must be >= 1")
        if self.stall_tol < 0.0:
            raise ValueError(f"stall_tol must be >= 0, got {self.stall_tol}")


def default_theta_spec(
    model: ReactionModel, params: ParameterSet
) -> list[tuple[str, float, float]]:
    """Default search box: every standard potential within ±0.2 V of the
    given set's value, porosity exponent in [0.1, 3], porosity sensitivity
    in [0.01, 2] /g and initial S8 loading in [0.5, 6] g."""
    spec: list[tuple[str, float, float]] = []
    for path in default_theta_paths(model):
        if path.startswith("E0["):
            nominal = params.get(path, model)
            spec.append((path, nominal - 0.2, nominal + 0.2))
        elif path == "gamma":
            spec.append((path, 0.1, 3.0))
        elif path == "omega":
            spec.append((path, 0.01, 2.0))
        else:  # m0[S8]
            spec.append((path, 0.5, 6.0))
    return spec


@dataclass(frozen=True)
class FitProblem:
    """One identification task: which model, which data, which knobs.

    ``theta_spec`` lists ``(parameter path, lower, upper)`` for each fitted
    dimension; ``fixed`` supplies everything not fitted.  ``mu`` is the
    charge scale between the data and the simulated cell (data values are
    prototype-scale when ``mu != 1``).  ``alpha`` weights the squared
    end-time mismatch; ``None`` picks N·(10 mV)²/T², i.e. missing the end
    time by the whole record costs as much as a uniform 10 mV error.
    """

    model_id: ModelId | int
    data: ExperimentalTrace
    theta_spec: list[tuple[str, float, float]]
    fixed: ParameterSet
    alpha: float | None = None
    mu: ScaleFactor | float = 1.0
    pso: PsoConfig = field(default_factory=PsoConfig)
    sim: SimulationConfig | None = None

    def validate(self, model: ReactionModel) -> None:
        self.fixed.validate(model)
        if not self.theta_spec:
            raise ValueError("theta_spec must name at least one parameter")
        seen = set()
        for path, lo, hi in self.theta_spec:
            if path in seen:
                raise ValueError(f"duplicate theta path {path!r}")
            seen.add(path)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(
                    f"bounds for {path!r} must be finite with lower < upper, "
                    f"got ({lo!r}, {hi!r})"
                )
            # probe the path (and the box's midpoint) against the model
            self.fixed.set(path, 0.5 * (lo + hi), model)
        if self.alpha is not None and not self.alpha >= 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.scale() > 0.0:
            raise ValueError("mu must be positive")

    # -- resolved pieces ----------------------------------------------------

    def scale(self) -> float:
        return self.mu.mu if isinstance(self.mu, ScaleFactor) else float(self.mu)

    def paths(self) -> list[str]:
        return [path for path, _, _ in self.theta_spec]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([b[1] for b in self.theta_spec], dtype=float)
        hi = np.array([b[2] for b in self.theta_spec], dtype=float)
        return lo, hi

    def resolved_alpha(self) -> float:
        """End-time weight [V²/s²]."""
        if self.alpha is not None:
            return self.alpha
        return self.data.n * 0.01 ** 2 / self.data.duration ** 2

    def penalty(self) -> float:
        """Objective value for infeasible candidates [V²]: strictly above
        anything a completed simulation can score."""
        return (
            self.data.n * _RESIDUAL_CAP ** 2
            + self.resolved_alpha() * self.data.duration ** 2
        )

    def resolved_config(self) -> SimulationConfig:
        """Simulation settings with the current taken from the data (scaled
        by mu) and the horizon pinned to twice the record length."""
        current = scale_current(
            self.data.effective_current, self.scale(), Direction.PROTO_TO_MODEL
        )
        base = self.sim if self.sim is not None else _FIT_SIM_DEFAULTS
        return replace(base, current=current, t_max=2.0 * self.data.duration)


# Identification default: a notch looser than the engine's, trading ~0.1 mV
# of voltage fidelity (far below any measured noise floor) for wall time
# across the thousands of swarm evaluations.  The step budget is several
# times what a well-posed discharge needs at these tolerances (~1k attempts);
# candidates in degenerate parameter corners can otherwise thrash the step
# controller for millions of steps before failing, and under the budget they
# take the penalty in tens of milliseconds.
_FIT_SIM_DEFAULTS = SimulationConfig(
    current=1.0,  # placeholder; resolved_config overwrites from the data
    rtol=1e-5,
    atol=1e-8,
    atol_msp=1e-14,
    atol_eps=1e-11,
    dt_max=60.0,
    max_steps=5_000,
)


# ---------------------------------------------------------------------------
# objective


def _assemble(
    problem: FitProblem, model: ReactionModel, theta: np.ndarray
) -> ParameterSet | None:
    """Fixed set ⊕ candidate values; None when the combination is invalid."""
    params = problem.fixed
    try:
        for path, value in zip(problem.paths(), theta):
            params = params.set(path, float(value), model)
        params.validate(model)
    except ValueError:
        return None
    return params


def _evaluate(
    problem: FitProblem,
    model: ReactionModel,
    config: SimulationConfig,
    theta: np.ndarray,
) -> tuple[float, SimulationTrace | None]:
    """Objective value plus the trace (None on any penalty path)."""
    lo, hi = problem.bounds()
    if np.any(theta < lo) or np.any(theta > hi):
        return problem.penalty(), None
    params = _assemble(problem, model, theta)
    if params is None:
        return problem.penalty(), None
    trace = simulate(model, params, config)
    if trace.failed:
        return problem.penalty(), None
    data = problem.data
    alpha = problem.resolved_alpha()
    t_hat = trace.t_end
    n_min = int(np.searchsorted(data.t, t_hat, side="right"))
    v_hat = np.interp(data.t[:n_min], trace.t, trace.v)
    r = v_hat - data.v[:n_min]
    j = (
        float(r @ r)
        + _RESIDUAL_CAP ** 2 * (data.n - n_min)
        + alpha * (t_hat - data.duration) ** 2
    )
    return j, trace


def objective(problem: FitProblem, theta) -> float:
    """Misfit J [V²] of one candidate vector.

    Σ (V̂_k − V_m,k)² over the measured timestamps the simulation covers
    (simulated voltage linearly interpolated in time), plus (5 V)² for each
    uncovered timestamp, plus α·(T̂ − T)².  Out-of-bounds candidates and
    failed simulations score the flat :meth:`FitProblem.penalty`.  Pure:
    identical θ always yields identical J.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(problem.theta_spec),):
        raise InvalidTheta(
            f"theta has shape {theta.shape}, expected ({len(problem.theta_spec)},)"
        )
    if not np.all(np.isfinite(theta)):
        raise InvalidTheta(f"theta must be finite, got {theta!r}")
    model = build_model(problem.model_id)
    problem.validate(model)
    j, _ = _evaluate(problem, model, problem.resolved_config(), theta)
    return j


# ---------------------------------------------------------------------------
# swarm search


@dataclass(frozen=True)
class FitResult:
    """Best candidate found, with enough bookkeeping to recompute J.

    ``j == rmse²·n_min + (n − n_min)·(5 V)² + alpha·duration_err²`` to
    rounding error, and re-evaluating :func:`objective` at ``theta_hat``
    reproduces ``j`` exactly.  ``history`` holds the best J after each sweep
    (entry 0 is the initial swarm's best); it is non-increasing.
    """

    paths: tuple[str, ...]
    theta_hat: np.ndarray
    j: float
    rmse: float
    duration_err: float
    n: int
    n_min: int
    t_data: float
    t_sim: float
    alpha: float
    trace: SimulationTrace
    history: np.ndarray
    n_evals: int
    stalled: bool

    def theta_dict(self) -> dict[str, float]:
        return {p: float(x) for p, x in zip(self.paths, self.theta_hat)}

    @property
    def n_iters(self) -> int:
        """Movement iterations run (sweeps beyond the initial evaluation)."""
        return len(self.history) - 1


def _reflect(x: np.ndarray, v: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Fold positions back into the box, reversing the offending velocity."""
    for _ in range(8):
        below = x < lo
        above = x > hi
        if not (below.any() or above.any()):
            return
        x[below] = 2.0 * lo[below] - x[below]
        x[above] = 2.0 * hi[above] - x[above]
        v[below | above] *= -1.0
    np.clip(x, lo, hi, out=x)


def fit(problem: FitProblem) -> FitResult:
    """Synchronous global-best particle swarm over the theta box.

    Deterministic for a fixed seed: every particle draws from its own
    pre-split RNG stream, and personal/global bests update only between
    iterations, so the outcome does not depend on evaluation order.  Raises
    :class:`AllFailed` when no particle ever completes a simulation.
    """
    model = build_model(problem.model_id)
    problem.validate(model)
    config = problem.resolved_config()
    pso = problem.pso
    lo, hi = problem.bounds()
    dim = len(lo)
    v_max = pso.v_max_frac * (hi - lo)
    penalty = problem.penalty()

    rngs = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence(pso.seed).spawn(pso.swarm_size)
    ]
    x = np.empty((pso.swarm_size, dim))
    vel = np.empty((pso.swarm_size, dim))
    for i, rng in enumerate(rngs):
        x[i] = lo + rng.random(dim) * (hi - lo)
        vel[i] = (2.0 * rng.random(dim) - 1.0) * v_max

    def sweep(pos: np.ndarray) -> np.ndarray:
        # independent evaluations; serial here, parallel-safe by contract
        return np.array(
            [_evaluate(problem, model, config, p)[0] for p in pos]
        )

    j = sweep(x)
    n_evals = pso.swarm_size
    pbest_x = x.copy()
    pbest_j = j.copy()
    g = int(np.argmin(pbest_j))
    gbest_x = pbest_x[g].copy()
    gbest_j = float(pbest_j[g])
    history = [gbest_j]

    stall = 0
    stalled = False
    for _ in range(pso.max_iters - 1):
        for i, rng in enumerate(rngs):
            r1 = rng.random(dim)
            r2 = rng.random(dim)
            vel[i] = (
                pso.w * vel[i]
                + pso.c1 * r1 * (pbest_x[i] - x[i])
                + pso.c2 * r2 * (gbest_x - x[i])
            )
            np.clip(vel[i], -v_max, v_max, out=vel[i])
            x[i] += vel[i]
            _reflect(x[i], vel[i], lo, hi)
        j = sweep(x)
        n_evals += pso.swarm_size
        improved = j < pbest_j
        pbest_j[improved] = j[improved]
        pbest_x[improved] = x[improved]
        g = int(np.argmin(pbest_j))
        prev = gbest_j
        if pbest_j[g] < gbest_j:
            gbest_j = float(pbest_j[g])
            gbest_x = pbest_x[g].copy()
        history.append(gbest_j)
        if prev - gbest_j > pso.stall_tol * abs(prev):
            stall = 0
        else:
            stall += 1
            if stall >= pso.stall_iters:
                stalled = True
                break
        if gbest_j == 0.0:
            break

    if gbest_j >= penalty:
        raise AllFailed(
            f"no simulation completed in {len(history) - 1} iterations "
            f"(best J = penalty = {penalty!r}); widen the bounds or check "
            "the configuration"
        )

    # rebuild the winner's trace and misfit pieces (pure objective: this
    # reproduces gbest_j bit for bit)
    j_hat, trace = _evaluate(problem, model, config, gbest_x)
    data = problem.data
    t_hat = trace.t_end
    n_min = int(np.searchsorted(data.t, t_hat, side="right"))
    r = np.interp(data.t[:n_min], trace.t, trace.v) - data.v[:n_min]
    rmse = math.sqrt(float(r @ r) / n_min) if n_min else math.inf
    return FitResult(
        paths=tuple(problem.paths()),
        theta_hat=gbest_x,
        j=j_hat,
        rmse=rmse,
        duration_err=abs(t_hat - data.duration),
        n=data.n,
        n_min=n_min,
        t_data=data.duration,
        t_sim=t_hat,
        alpha=problem.resolved_alpha(),
        trace=trace,
        history=np.asarray(history),
        n_evals=n_evals,
        stalled=stalled,
    )


# ---------------------------------------------------------------------------
# reporting


def write_fit_report(problem: FitProblem, result: FitResult, root) -> list[Path]:
    """Write ``report.txt``, ``history.csv`` and ``best_trace.csv`` under
    ``root`` and return the paths.  The report tabulates the fitted values at
    the cell's own scale and at prototype scale (divided back through mu)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    model = build_model(problem.model_id)
    fitted = _assemble(problem, model, result.theta_hat)
    proto = scale_parameters(fitted, problem.scale(), Direction.MODEL_TO_PROTO)

    report = root / "report.txt"
    lines = [
        f"model: {model.model_id.name}",
        f"data: {problem.data.meta.get('path', '<arrays>')}",
        f"samples: {result.n}   covered: {result.n_min}   "
        f"T: {result.t_data:.6g} s   T_hat: {result.t_sim:.6g} s",
        f"current: {problem.data.effective_current:.6g} A at data scale, "
        f"mu = {problem.scale():.6g}",
        f"alpha: {result.alpha:.6g} V^2/s^2",
        f"J: {result.j:.6g} V^2",
        f"rmse: {result.rmse * 1e3:.4g} mV over {result.n_min} samples",
        f"duration_err: {result.duration_err:.6g} s "
        f"({100 * result.duration_err / result.t_data:.3g}% of T)",
        f"iterations: {result.n_iters}"
        + (" (stalled)" if result.stalled else "")
        + f"   evaluations: {result.n_evals}",
        "",
        f"{'parameter':<12}{'fitted':>16}{'prototype scale':>18}",
    ]
    for path in result.paths:
        lines.append(
            f"{path:<12}{fitted.get(path, model):>16.8g}"
            f"{proto.get(path, model):>18.8g}"
        )
    report.write_text("\n".join(lines) + "\n")

    history = root / "history.csv"
    with open(history, "w") as fh:
        fh.write("iteration,best_j\n")
        for k, bj in enumerate(result.history):
            fh.write(f"{k},{bj!r}\n")

    best = root / "best_trace.csv"
    result.trace.to_csv(best)
    return [report, history, best]
