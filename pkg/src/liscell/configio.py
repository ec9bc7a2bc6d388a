"""Flat ``key = value`` files for parameter sets and fit bounds.

The format is deliberately dumb: one assignment per line, ``#`` comments,
units noted in comments only.  Floats are written with ``repr`` so a
save/load round trip reproduces every value bit for bit, which keeps runs
reproducible from their config snapshots alone.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .catalog import ModelId, build_model
from .parameters import ParameterSet, PhysicalConstants

__all__ = ["ConfigError", "save_parameters", "load_parameters", "load_bounds"]


class ConfigError(ValueError):
    """A config file is malformed or inconsistent; message carries file and
    line context."""


_SCALAR_UNITS = (
    ("a_v0", "nominal active surface [m^2]"),
    ("v", "electrolyte volume [L]"),
    ("gamma", "porosity exponent [-]"),
    ("omega", "porosity sensitivity to precipitate mass [1/g]"),
    ("k_p", "precipitation rate constant [1/(g s)]"),
    ("S_sat", "dissolved-sulfide saturation mass [g]"),
)

_CONSTANT_UNITS = (
    ("faraday", "[C/mol]"),
    ("gas", "[J/(K mol)]"),
    ("temperature", "[K]"),
    ("molar_mass_s", "[g/mol]"),
)


def save_parameters(path, model_id: ModelId | int, params: ParameterSet) -> None:
    """Write one parameter set as a flat key = value file."""
    model = build_model(model_id)
    params.validate(model)
    lines = [
        "# cell parameter set (flat key = value; units in comments)",
        f"model = {int(model.model_id)}",
        "",
        "# standard potentials [V], one per reduction step",
    ]
    lines += [f"E0[{j + 1}] = {params.e0[j]!r}" for j in range(model.n_reactions)]
    lines.append("")
    lines.append("# exchange-current prefactors [A/m^2]")
    lines += [f"i0[{j + 1}] = {params.i0[j]!r}" for j in range(model.n_reactions)]
    lines.append("")
    for name, unit in _SCALAR_UNITS:
        attr = "s_sat" if name == "S_sat" else name
        lines.append(f"# {unit}")
        lines.append(f"{name} = {getattr(params, attr)!r}")
    lines.append("")
    lines.append("# initial dissolved masses [g]")
    lines += [
        f"m0[{sp}] = {params.m0[i]!r}"
        for i, sp in enumerate(model.species_names)
    ]
    lines.append("# precipitate seed [g]")
    lines.append(f"m_Sp0 = {params.m_sp0!r}")
    lines.append("")
    lines.append("# physical constants")
    for name, unit in _CONSTANT_UNITS:
        lines.append(f"{name} = {getattr(params.constants, name)!r}  # {unit}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_assignments(path) -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines into {key: (value text, line number)}."""
    out: dict[str, tuple[str, int]] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def _pop_float(path, table: dict, key: str) -> float:
    if key not in table:
        raise ConfigError(f"{path}: missing key {key!r}")
    value, lineno = table.pop(key)
    try:
        return float(value)
    except ValueError:
        raise ConfigError(
            f"{path}: line {lineno}: {key} must be a number, got {value!r}"
        ) from None


def load_parameters(path) -> tuple[ModelId, ParameterSet]:
    """Read a parameter file written by :func:`save_parameters`.

    Physical-constant keys are optional (defaults apply); everything else is
    required, and unknown keys are rejected rather than ignored.
    """
    table = _read_assignments(path)
    if "model" not in table:
        raise ConfigError(f"{path}: missing key 'model'")
    value, lineno = table.pop("model")
    try:
        model = build_model(int(value))
    except (ValueError, KeyError):
        raise ConfigError(
            f"{path}: line {lineno}: model must be 1..4, got {value!r}"
        ) from None

    e0 = tuple(
        _pop_float(path, table, f"E0[{j + 1}]") for j in range(model.n_reactions)
    )
    i0 = tuple(
        _pop_float(path, table, f"i0[{j + 1}]") for j in range(model.n_reactions)
    )
    scalars = {
        ("s_sat" if name == "S_sat" else name): _pop_float(path, table, name)
        for name, _ in _SCALAR_UNITS
    }
    m0 = tuple(
        _pop_float(path, table, f"m0[{sp}]") for sp in model.species_names
    )
    m_sp0 = _pop_float(path, table, "m_Sp0")
    constants = PhysicalConstants(
        **{
            f.name: (
                _pop_float(path, table, f.name)
                if f.name in table
                else f.default
            )
            for f in fields(PhysicalConstants)
        }
    )
    if table:
        key, (_, lineno) = next(iter(table.items()))
        raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
    params = ParameterSet(
        e0=e0, i0=i0, m0=m0, m_sp0=m_sp0, constants=constants, **scalars
    )
    try:
        params.validate(model)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None
    return model.model_id, params


def load_bounds(path) -> list[tuple[str, float, float]]:
    """Read fit bounds: one ``path = lower, upper`` line per fitted parameter,
    in search order."""
    table = _read_assignments(path)
    spec: list[tuple[str, float, float]] = []
    for key, (value, lineno) in table.items():
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != 2:
            raise ConfigError(
                f"{path}: line {lineno}: expected 'lower, upper', got {value!r}"
            )
        try:
            lo, hi = float(parts[0]), float(parts[1])
        except ValueError:
            raise ConfigError(
                f"{path}: line {lineno}: bounds must be numbers, got {value!r}"
            ) from None
        spec.append((key, lo, hi))
    return spec
