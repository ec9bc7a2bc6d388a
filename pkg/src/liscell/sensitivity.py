"""One-at-a-time parameter perturbation studies.

A sweep holds every other input fixed, re-simulates the discharge for a set
of offsets applied to one parameter, and summarizes how the curve's named
features (plateau levels, dip point, capacity, duration) move.
``rank_parameters`` condenses the same machinery into an influence ordering
over the usual tuning knobs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import ModelId, ReactionModel, build_model
from .engine import SimulationConfig, SimulationTrace, simulate
from .features import trace_features
from .parameters import ParameterSet

__all__ = [
    "DEFAULT_SCALE_GRID",
    "DEFAULT_E0_OFFSET_GRID",
    "SweepSpec",
    "TraceMetrics",
    "SweepResult",
    "run_sweep",
    "RankEntry",
    "rank_parameters",
    "rank_paths",
    "write_sweep_csv",
]

# default one-at-a-time grids: fractional factors for scale mode, volts for
# offset mode (standard potentials are levels, not scales)
DEFAULT_SCALE_GRID = (-0.20, -0.10, 0.10, 0.20)
DEFAULT_E0_OFFSET_GRID = (-0.050, -0.025, 0.025, 0.050)

_MODES = ("scale", "offset")


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep: which knob, which offsets, around which base.

    ``mode`` picks how a perturbation p lands on the nominal value x:
    ``"scale"`` gives x*(1+p), ``"offset"`` gives x+p.
    """

    model_id: ModelId | int
    target: str
    base: ParameterSet
    config: SimulationConfig
    perturbations: tuple[float, ...] = DEFAULT_SCALE_GRID
    mode: str = "scale"
    name: str = "sweep"  # output directory stem for the CSV writer

    def __post_init__(self):
        object.__setattr__(self, "perturbations",
                           tuple(float(p) for p in self.perturbations))
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not all(math.isfinite(p) for p in self.perturbations):
            raise ValueError("perturbations must be finite")

    def label(self, p: float) -> str:
        """File/row label for one perturbation (``x0.9`` / ``+0.025``)."""
        return f"x{1.0 + p:g}" if self.mode == "scale" else f"{p:+g}"

    def perturbed(self, model: ReactionModel, p: float) -> ParameterSet:
        """The base parameters with one perturbation applied and validated."""
        value = self.base.get(self.target, model)
        value = value * (1.0 + p) if self.mode == "scale" else value + p
        out = self.base.set(self.target, value, model)
        try:
            out.validate(model)
        except ValueError as err:
            raise ValueError(
                f"perturbation {self.label(p)} of {self.target} is invalid: {err}"
            ) from err
        return out


@dataclass(frozen=True)
class TraceMetrics:
    """Feature summary of one discharge trace (None where undefined)."""

    failed: bool
    duration_s: float | None = None
    specific_capacity: float | None = None  # mAh per g initial S8
    high_plateau_v: float | None = None
    low_plateau_v: float | None = None
    dip_v: float | None = None
    dip_capacity: float | None = None

    _NUMERIC = ("duration_s", "specific_capacity", "high_plateau_v",
                "low_plateau_v", "dip_v", "dip_capacity")

    def delta(self, nominal: "TraceMetrics") -> dict[str, float | None]:
        """Per-metric difference against the nominal run (None-propagating)."""
        out: dict[str, float | None] = {}
        for name in self._NUMERIC:
            a, b = getattr(self, name), getattr(nominal, name)
            out[name] = None if a is None or b is None else a - b
        return out


def _metrics(trace: SimulationTrace) -> TraceMetrics:
    if trace.failed:
        return TraceMetrics(failed=True)
    try:
        feat = trace_features(trace)
    except ValueError:
        # too short / degenerate to featurize; keep the scalar outcomes
        return TraceMetrics(failed=False, duration_s=trace.t_end,
                            specific_capacity=trace.specific_capacity)
    return TraceMetrics(
        failed=False,
        duration_s=trace.t_end,
        specific_capacity=trace.specific_capacity,
        high_plateau_v=feat.high_plateau_mean,
        low_plateau_v=feat.low_plateau_mean,
        dip_v=feat.dip_voltage,
        dip_capacity=feat.dip_capacity,
    )


@dataclass(frozen=True)
class SweepResult:
    """All traces of one sweep plus their feature metrics.

    ``traces[0]`` / ``metrics[0]`` belong to the nominal run; the rest align
    with ``spec.perturbations``.
    """

    spec: SweepSpec
    traces: tuple[SimulationTrace, ...]
    metrics: tuple[TraceMetrics, ...]

    @property
    def nominal_trace(self) -> SimulationTrace:
        return self.traces[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return ("nominal",) + tuple(self.spec.label(p)
                                    for p in self.spec.perturbations)

    def deltas(self) -> list[dict[str, float | None]]:
        """Per-perturbation metric shifts against the nominal run."""
        return [m.delta(self.metrics[0]) for m in self.metrics[1:]]


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Simulate the nominal run plus one run per perturbation.

    A run that ends in solver failure is kept and flagged in its metrics
    rather than aborting the sweep.  Deterministic: identical specs produce
    identical results.
    """
    model = build_model(spec.model_id)
    spec.base.validate(model)
    psets = [spec.base]
    psets += [spec.perturbed(model, p) for p in spec.perturbations]
    traces = tuple(simulate(model, ps, spec.config) for ps in psets)
    return SweepResult(spec=spec, traces=traces,
                       metrics=tuple(_metrics(t) for t in traces))


# -- influence ranking --------------------------------------------------------


def rank_paths(model: ReactionModel) -> list[str]:
    """Parameter paths covered by ``rank_parameters``, in declaration order."""
    p = model.n_reactions
    paths = [f"E0[{j}]" for j in range(1, p + 1)]
    paths += [f"i0[{j}]" for j in range(1, p + 1)]
    paths += ["gamma", "omega", "k_p", "S_sat", "a_v0", "v",
              "m0[S8]", "m_Sp0"]
    return paths


@dataclass(frozen=True)
class RankEntry:
    path: str
    score: float  # sup-norm voltage deviation on the capacity axis [V]
    failed: bool = False


def _voltage_sup_norm(a: SimulationTrace, b: SimulationTrace) -> float:
    """Sup-norm voltage gap on the union capacity grid.

    Outside a trace's own capacity range it is held at its terminal value,
    so curves of unequal length are compared over the longer run's axis.
    """
    ca, cb = a.capacity_axis(), b.capacity_axis()
    grid = np.union1d(ca, cb)
    va = np.interp(grid, ca, a.v)
    vb = np.interp(grid, cb, b.v)
    return float(np.max(np.abs(va - vb)))


def rank_parameters(
    model_id: ModelId | int,
    base: ParameterSet,
    config: SimulationConfig,
    perturbation: float,
) -> list[RankEntry]:
    """Influence ordering from symmetric one-at-a-time perturbations.

    Each path is scaled to (1-perturbation) and (1+perturbation) of nominal
    and the two runs' voltage-vs-capacity curves compared in sup norm.
    Descending score; ties break lexicographically; pairs with a failed run
    carry score NaN and sort last.
    """
    if not perturbation >= 0.0:
        raise ValueError(f"perturbation must be non-negative, got {perturbation}")
    model = build_model(model_id)
    base.validate(model)
    entries = []
    for path in rank_paths(model):
        if perturbation == 0.0:
            entries.append(RankEntry(path, 0.0))
            continue
        spec = SweepSpec(model_id=model_id, target=path, base=base,
                         config=config,
                         perturbations=(-perturbation, perturbation))
        lo = simulate(model, spec.perturbed(model, -perturbation), config)
        hi = simulate(model, spec.perturbed(model, perturbation), config)
        if lo.failed or hi.failed:
            entries.append(RankEntry(path, math.nan, failed=True))
        else:
            entries.append(RankEntry(path, _voltage_sup_norm(lo, hi)))
    return sorted(entries,
                  key=lambda e: (e.failed, -e.score if not e.failed else 0.0,
                                 e.path))


# -- CSV output ---------------------------------------------------------------

_SUMMARY_FIELDS = TraceMetrics._NUMERIC


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_sweep_csv(result: SweepResult, root: str | Path) -> list[Path]:
    """Write one trace CSV per run plus ``summary.csv``.

    Layout: ``<root>/<spec.name>/<target>/<label>.csv`` with labels
    ``nominal`` and one per perturbation, and ``summary.csv`` alongside
    holding absolute metrics and deltas per row.  Returns written paths.
    """
    out_dir = Path(root) / result.spec.name / result.spec.target
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for label, trace in zip(result.labels, result.traces):
        path = out_dir / f"{label}.csv"
        trace.to_csv(path)
        written.append(path)

    summary = out_dir / "summary.csv"
    deltas = [dict.fromkeys(_SUMMARY_FIELDS)] + result.deltas()
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "failed", *_SUMMARY_FIELDS,
                    *(f"d_{name}" for name in _SUMMARY_FIELDS)])
        for label, met, dlt in zip(result.labels, result.metrics, deltas):
            w.writerow([label, str(met.failed).lower(),
                        *(_fmt(getattr(met, name)) for name in _SUMMARY_FIELDS),
                        *(_fmt(dlt[name]) for name in _SUMMARY_FIELDS)])
    written.append(summary)
    return written
