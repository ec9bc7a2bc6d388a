"""Command-line front end: simulate / sweep / scale / rank / fit.

Every command resolves its inputs, runs one module operation, drops its
outputs under ``--out`` (default from ``$LISCELL_OUT``, else
``./liscell-out``) and finishes by atomically writing ``manifest.json``
there — command line, resolved configuration snapshot, version, seed, wall
times and the output list, enough to rerun the command from the manifest
alone.

Exit codes: 0 success; 2 configuration error; 3 solver failure (the partial
trace is still written); 4 data-ingestion error; 5 the fit never completed a
simulation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .catalog import build_model
from .configio import ConfigError, load_bounds, load_parameters, save_parameters
from .engine import SimulationConfig, simulate
from .identify import (
    AllFailed,
    FitProblem,
    ParseError,
    PsoConfig,
    ValidationError,
    default_theta_spec,
    fit,
    load_experiment,
    write_fit_report,
)
from .parameters import ParameterSet, c_rate_current, nominal_parameters
from .sensitivity import (
    DEFAULT_E0_OFFSET_GRID,
    DEFAULT_SCALE_GRID,
    SweepSpec,
    rank_parameters,
    run_sweep,
    write_sweep_csv,
)
from .similitude import Direction, scale_current, scale_parameters

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INGEST = 4
EXIT_ALLFAILED = 5

_OUT_ENV = "LISCELL_OUT"


class _CliError(Exception):
    """Internal: carries an exit code and a user-facing message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# shared plumbing


def _out_dir(args) -> Path:
    root = args.out or os.environ.get(_OUT_ENV) or "liscell-out"
    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(
    out: Path,
    argv: list[str],
    config: dict,
    outputs: list[Path],
    seed: int | None,
    started: float,
) -> Path:
    manifest = {
        "tool": "liscell",
        "version": __version__,
        "command": argv,
        "config": config,
        "seed": seed,
        "started_unix": started,
        "ended_unix": time.time(),
        "outputs": sorted(str(p.relative_to(out)) for p in outputs),
    }
    path = out / "manifest.json"
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2) + "\n")
    os.replace(tmp, path)
    return path


def _load_params(args) -> ParameterSet:
    """Resolve ``--params nominal|<file>`` against ``--model``."""
    if args.params == "nominal":
        return nominal_parameters(args.model)
    try:
        model_id, params = load_parameters(args.params)
    except FileNotFoundError:
        raise _CliError(EXIT_CONFIG, f"parameter file not found: {args.params}")
    except ConfigError as err:
        raise _CliError(EXIT_CONFIG, str(err))
    if int(model_id) != args.model:
        raise _CliError(
            EXIT_CONFIG,
            f"parameter file is for model {int(model_id)}, not {args.model}",
        )
    return params


def _resolve_current(args, params: ParameterSet) -> float:
    if args.current is not None:
        return args.current
    return c_rate_current(params, args.c_rate)


def _sim_config(args, current: float) -> SimulationConfig:
    config = SimulationConfig(current=current)
    overrides = {
        name: getattr(args, name)
        for name in ("t_max", "v_cutoff", "rtol", "atol", "dt_max")
        if getattr(args, name) is not None
    }
    config = replace(config, **overrides)
    try:
        config.validate()
    except ValueError as err:
        raise _CliError(EXIT_CONFIG, str(err))
    return config

def _params_snapshot(model_id: int, params: ParameterSet) -> dict:
    snap = asdict(params)
    snap["model"] = model_id
    return snap


def _add_common(sub, current_group: bool = True):
    sub.add_argument("--model", type=int, required=True, choices=(1, 2, 3, 4))
    sub.add_argument(
        "--params",
        default="nominal",
        help="parameter file, or 'nominal' for the built-in values",
    )
    sub.add_argument("--out", help=f"output directory (default ${_OUT_ENV} or ./liscell-out)")
    sub.add_argument(
        "--threads",
        type=int,
        default=1,
        help="parallelism cap (evaluations currently run serially)",
    )
    if current_group:
        grp = sub.add_mutually_exclusive_group(required=True)
        grp.add_argument("--c-rate", type=float, help="discharge rate in C")
        grp.add_argument("--current", type=float, help="discharge current [A]")
        for name in ("t-max", "v-cutoff", "rtol", "atol", "dt-max"):
            sub.add_argument(f"--{name}", type=float)


# ---------------------------------------------------------------------------
# commands


def _cmd_simulate(args, argv) -> int:
    started = time.time()
    params = _load_params(args)
    current = _resolve_current(args, params)
    config = _sim_config(args, current)
    trace = simulate(args.model, params, config)

    out = _out_dir(args)
    trace_path = out / "trace.csv"
    trace.to_csv(trace_path)
    params_path = out / "params.txt"
    save_parameters(params_path, args.model, params)
    manifest = _write_manifest(
        out,
        argv,
        {
            "model": args.model,
            "sim": asdict(config),
            "params": _params_snapshot(args.model, params),
            "threads": args.threads,
        },
        [trace_path, params_path],
        seed=None,
        started=started,
    )
    print(
        f"model M{args.model}: {trace.termination.value} at {trace.t_end:.6g} s, "
        f"specific capacity {trace.specific_capacity:.6g} mAh/g"
    )
    print(f"outputs: {trace_path}, {manifest}")
    return EXIT_SOLVER if trace.failed else EXIT_OK


def _cmd_sweep(args, argv) -> int:
    started = time.time()
    params = _load_params(args)
    current = _resolve_current(args, params)
    config = _sim_config(args, current)
    if args.grid is not None:
        grid = tuple(float(x) for x in args.grid.split(","))
    elif args.mode == "scale":
        grid = DEFAULT_SCALE_GRID
    elif args.target.startswith("E0["):
        grid = DEFAULT_E0_OFFSET_GRID
    else:
        raise _CliError(
            EXIT_CONFIG, "--grid is required for offset sweeps of non-E0 targets"
        )
    try:
        spec = SweepSpec(
            model_id=args.model,
            target=args.target,
            base=params,
            config=config,
            perturbations=grid,
            mode=args.mode,
            name=args.name,
        )
        result = run_sweep(spec)
    except ValueError as err:
        raise _CliError(EXIT_CONFIG, str(err))

    out = _out_dir(args)
    paths = write_sweep_csv(result, out)
    manifest = _write_manifest(
        out,
        argv,
        {
            "model": args.model,
            "target": args.target,
            "mode": args.mode,
            "perturbations": list(grid),
            "sim": asdict(config),
            "params": _params_snapshot(args.model, params),
            "threads": args.threads,
        },
        paths,
        seed=None,
        started=started,
    )
    n_failed = sum(m.failed for m in result.metrics)
    print(
        f"sweep {args.target}: {len(result.traces)} runs "
        f"({n_failed} failed), outputs under {out / spec.name}"
    )
    print(f"manifest: {manifest}")
    return EXIT_OK


def _cmd_scale(args, argv) -> int:
    started = time.time()
    params = _load_params(args)
    direction = (
        Direction.MODEL_TO_PROTO
        if args.direction == "model-to-proto"
        else Direction.PROTO_TO_MODEL
    )
    try:
        scaled = scale_parameters(params, args.mu, direction)
        scaled.validate(build_model(args.model))
    except ValueError as err:
        raise _CliError(EXIT_CONFIG, str(err))

    out = _out_dir(args)
    scaled_path = out / "scaled_params.txt"
    save_parameters(scaled_path, args.model, scaled)
    config = {
        "model": args.model,
        "mu": args.mu,
        "direction": args.direction,
        "params": _params_snapshot(args.model, params),
    }
    lines = [
        f"mu = {args.mu:g} ({args.direction}): "
        f"m0[S8] {params.m0[0]:.6g} g -> {scaled.m0[0]:.6g} g"
    ]
    if args.current is not None:
        scaled_current = scale_current(args.current, args.mu, direction)
        config["current"] = args.current
        config["scaled_current"] = scaled_current
        lines.append(f"current {args.current:.6g} A -> {scaled_current:.6g} A")
    manifest = _write_manifest(
        out, argv, config, [scaled_path], seed=None, started=started
    )
    print("\n".join(lines))
    print(f"outputs: {scaled_path}, {manifest}")
    return EXIT_OK


def _cmd_rank(args, argv) -> int:
    started = time.time()
    params = _load_params(args)
    current = _resolve_current(args, params)
    config = _sim_config(args, current)
    try:
        entries = rank_parameters(args.model, params, config, args.perturbation)
    except ValueError as err:
        raise _CliError(EXIT_CONFIG, str(err))

    out = _out_dir(args)
    rank_path = out / "rank.csv"
    with open(rank_path, "w") as fh:
        fh.write("path,score_v,failed\n")
        for e in entries:
            fh.write(f"{e.path},{e.score!r},{int(e.failed)}\n")
    manifest = _write_manifest(
        out,
        argv,
        {
            "model": args.model,
            "perturbation": args.perturbation,
            "sim": asdict(config),
            "params": _params_snapshot(args.model, params),
            "threads": args.threads,
        },
        [rank_path],
        seed=None,
        started=started,
    )
    for e in entries:
        flag = "  (failed)" if e.failed else ""
        print(f"{e.path:<10} {e.score:.6g} V{flag}")
    print(f"outputs: {rank_path}, {manifest}")
    return EXIT_OK


def _cmd_fit(args, argv) -> int:
    started = time.time()
    params = _load_params(args)
    model = build_model(args.model)
    try:
        data = load_experiment(
            args.data, current=args.current, current_bias=args.bias
        )
    except FileNotFoundError:
        raise _CliError(EXIT_INGEST, f"data file not found: {args.data}")
    except (ParseError, ValidationError) as err:
        raise _CliError(EXIT_INGEST, str(err))

    if args.bounds is not None:
        try:
            theta_spec = load_bounds(args.bounds)
        except FileNotFoundError:
            raise _CliError(EXIT_CONFIG, f"bounds file not found: {args.bounds}")
        except ConfigError as err:
            raise _CliError(EXIT_CONFIG, str(err))
    else:
        theta_spec = default_theta_spec(model, params)

    pso = PsoConfig(seed=args.seed)
    overrides = {}
    if args.swarm is not None:
        overrides["swarm_size"] = args.swarm
    if args.iters is not None:
        overrides["max_iters"] = args.iters
    try:
        if overrides:
            pso = replace(pso, **overrides)
        problem = FitProblem(
            model_id=args.model,
            data=data,
            theta_spec=theta_spec,
            fixed=params,
            alpha=args.alpha,
            mu=args.mu,
            pso=pso,
        )
        result = fit(problem)
    except AllFailed as err:
        raise _CliError(EXIT_ALLFAILED, str(err))
    except ValueError as err:
        raise _CliError(EXIT_CONFIG, str(err))

    out = _out_dir(args)
    paths = write_fit_report(problem, result, out)
    manifest = _write_manifest(
        out,
        argv,
        {
            "model": args.model,
            "data": str(args.data),
            "current": args.current,
            "current_bias": args.bias,
            "mu": args.mu,
            "alpha": result.alpha,
            "model_scale_current": problem.resolved_config().current,
            "theta_spec": [list(b) for b in theta_spec],
            "pso": asdict(pso),
            "params": _params_snapshot(args.model, params),
            "threads": args.threads,
        },
        paths,
        seed=args.seed,
        started=started,
    )
    sys.stdout.write((out / "report.txt").read_text())
    print(f"outputs: {', '.join(str(p) for p in paths)}, {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liscell",
        description="Zero-dimensional lithium-sulfur cell toolbox",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one constant-current discharge")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="one-parameter perturbation sweep")
    _add_common(p)
    p.add_argument("--target", required=True, help="parameter path, e.g. E0[1]")
    p.add_argument("--mode", choices=("scale", "offset"), default="scale")
    p.add_argument("--grid", help="comma-separated perturbations")
    p.add_argument("--name", default="sweep")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("scale", help="carry a parameter set across scales")
    _add_common(p, current_group=False)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument(
        "--direction",
        choices=("model-to-proto", "proto-to-model"),
        default="model-to-proto",
    )
    p.add_argument("--current", type=float, help="also scale this current [A]")
    p.set_defaults(func=_cmd_scale)

    p = sub.add_parser("rank", help="influence ranking of the tuning knobs")
    _add_common(p)
    p.add_argument("--perturbation", type=float, default=0.1)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("fit", help="identify parameters from a discharge record")
    _add_common(p, current_group=False)
    p.add_argument("--data", required=True, help="CSV record (t_s,V[,I_A])")
    p.add_argument("--current", type=float, help="applied current [A]")
    p.add_argument("--bias", type=float, default=0.0, help="current bias [A]")
    p.add_argument("--mu", type=float, default=1.0, help="data-to-cell charge scale")
    p.add_argument("--alpha", type=float, help="end-time weight [V^2/s^2]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bounds", help="bounds file: 'path = lower, upper' lines")
    p.add_argument("--swarm", type=int, help="swarm size")
    p.add_argument("--iters", type=int, help="max swarm sweeps")
    p.set_defaults(func=_cmd_fit)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except _CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
