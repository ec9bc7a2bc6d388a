"""Cell parameters: physical constants, per-model nominal values, path access.

Units follow the gram/litre convention used throughout the package: masses in
g, volume in L, current in A, potentials in V, time in s.  Exchange-current
prefactors ``i0`` are A/m^2 against the nominal active area ``a_v0`` in m^2,
so the product is an ampere scale.

Parameter *paths* are short strings used by sweeps and fitting to address one
scalar inside a :class:`ParameterSet`:

- ``"E0[j]"`` / ``"i0[j]"``  -- per-reaction values, 1-based reaction index
- ``"m0[S8]"`` (or any species name) -- initial dissolved mass
- ``"gamma"``, ``"omega"``, ``"k_p"``, ``"S_sat"``, ``"a_v0"``, ``"v"``,
  ``"m_Sp0"`` -- scalars

Setting ``m0[S8]`` rescales the trace-level seed masses of the other species
proportionally, preserving the default seed fraction; every other path sets
exactly one field.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .catalog import ModelId, ReactionModel, build_model

__all__ = [
    "PhysicalConstants",
    "ParameterSet",
    "nominal_parameters",
    "default_theta_paths",
    "DEFAULT_M0_S8",
    "SEED_FRACTION",
    "DEFAULT_M_SP0",
]

# Default initial loading: 2.8 g of dissolved S8 puts a 1 A-class discharge in
# the multi-hour range seen in practice; downstream species are seeded at a
# small fraction of it so every logarithmic mass ratio starts finite.
DEFAULT_M0_S8 = 2.8  # [g]
SEED_FRACTION = 1e-4
DEFAULT_M_SP0 = 1e-6  # [g] precipitate nucleation seed

# Theoretical specific capacity of sulfur (two electrons per atom), used to
# convert C-rates into currents.
SULFUR_CAPACITY_MAH_G = 1672.0


@dataclass(frozen=True)
class PhysicalConstants:
    """Universal constants and cell temperature.

    Attributes
    ----------
    faraday : float
        Faraday constant [C/mol].
    gas : float
        Molar gas constant [J/(K mol)].
    temperature : float
        Cell temperature [K].
    molar_mass_s : float
        Molar mass of atomic sulfur [g/mol].
    """

    faraday: float = 9.649e4
    gas: float = 8.3145
    temperature: float = 298.0
    molar_mass_s: float = 32.065


@dataclass(frozen=True)
class ParameterSet:
    """All tunable quantities of one cell model at one physical scale.

    Attributes
    ----------
    e0 : tuple[float, ...]
        Standard reduction potential per reaction [V].
    i0 : tuple[float, ...]
        Exchange-current prefactor per reaction [A/m^2].
    a_v0 : float
        Nominal active reaction area [m^2].
    v : float
        Electrolyte volume [L].
    gamma : float
        Exponent linking relative porosity to active area.
    omega : float
        Porosity sensitivity to precipitate growth [1/g].
    k_p : float
        Precipitation rate constant [1/(g s)].
    s_sat : float
        Dissolved S^2- saturation mass [g].
    m0 : tuple[float, ...]
        Initial dissolved mass per species [g], in the model's species order.
    m_sp0 : float
        Initial precipitate mass [g].
    constants : PhysicalConstants
        Universal constants and temperature.
    """

    e0: tuple[float, ...]
    i0: tuple[float, ...]
    a_v0: float
    v: float
    gamma: float
    omega: float
    k_p: float
    s_sat: float
    m0: tuple[float, ...]
    m_sp0: float
    constants: PhysicalConstants = PhysicalConstants()

    def validate(self, model: ReactionModel) -> None:
        """Check shapes and positivity against a reaction model."""
        p, q = model.n_reactions, model.n_species
        if len(self.e0) != p or len(self.i0) != p:
            raise ValueError(
                f"need {p} per-reaction values, got e0[{len(self.e0)}], i0[{len(self.i0)}]"
            )
        if len(self.m0) != q:
            raise ValueError(f"need {q} initial masses, got {len(self.m0)}")
        positives = {
            "i0": min(self.i0),
            "a_v0": self.a_v0,
            "v": self.v,
            "k_p": self.k_p,
            "S_sat": self.s_sat,
            "m0": min(self.m0),
            "m_Sp0": self.m_sp0,
            "T": self.constants.temperature,
        }
        for name, value in positives.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.gamma < 0.0 or self.omega < 0.0:
            raise ValueError("gamma and omega must be non-negative")
        if min(self.e0) <= 0.0:
            raise ValueError("standard potentials must be positive")

    # -- path access ---------------------------------------------------------

    def get(self, path: str, model: ReactionModel) -> float:
        """Read one scalar by parameter path."""
        kind, idx = _parse_path(path, model)
        if kind == "e0":
            return self.e0[idx]
        if kind == "i0":
            return self.i0[idx]
        if kind == "m0":
            return self.m0[idx]
        return getattr(self, _SCALAR_FIELDS[kind])

    def set(self, path: str, value: float, model: ReactionModel) -> "ParameterSet":
        """Return a copy with one scalar replaced.

        ``m0[S8]`` additionally rescales the other species' seed masses by the
        same factor, so the seed fraction survives fitting.
        """
        kind, idx = _parse_path(path, model)
        if kind == "e0":
            return replace(self, e0=_with(self.e0, idx, value))
        if kind == "i0":
            return replace(self, i0=_with(self.i0, idx, value))
        if kind == "m0":
            if idx == 0:
                factor = value / self.m0[0]
                return replace(self, m0=tuple(m * factor for m in self.m0))
            return replace(self, m0=_with(self.m0, idx, value))
        return replace(self, **{_SCALAR_FIELDS[kind]: value})


_SCALAR_FIELDS = {
    "gamma": "gamma",
    "omega": "omega",
    "k_p": "k_p",
    "S_sat": "s_sat",
    "a_v0": "a_v0",
    "v": "v",
    "m_Sp0": "m_sp0",
}

_INDEXED_RE = re.compile(r"^(E0|i0|m0)\[([^\]]+)\]$")


def _parse_path(path: str, model: ReactionModel) -> tuple[str, int]:
    if path in _SCALAR_FIELDS:
        return path, -1
    m = _INDEXED_RE.match(path)
    if m is None:
        raise KeyError(f"unknown parameter path {path!r}")
    kind, arg = m.group(1), m.group(2)
    if kind == "m0":
        return "m0", model.species_index(arg)
    j = int(arg)
    if not 1 <= j <= model.n_reactions:
        raise KeyError(f"reaction index out of range in {path!r}")
    return kind.lower(), j - 1


def _with(values: tuple[float, ...], idx: int, value: float) -> tuple[float, ...]:
    out = list(values)
    out[idx] = value
    return tuple(out)


# Nominal per-reaction values for each chain variant.
_NOMINAL_E0 = {
    ModelId.M1: (2.40, 2.10),
    ModelId.M2: (2.40, 2.30, 2.10),
    ModelId.M3: (2.46, 2.38, 2.30, 2.10),
    ModelId.M4: (2.46, 2.38, 2.30, 2.15, 1.98),
}
_NOMINAL_I0 = {
    ModelId.M1: (2.00, 0.02),
    ModelId.M2: (2.00, 0.02, 0.02),
    ModelId.M3: (2.00, 0.02, 0.02, 0.02),
    ModelId.M4: (2.00, 0.02, 0.02, 0.02, 0.02),
}


def nominal_parameters(
    model_id: ModelId | int,
    m0_s8: float = DEFAULT_M0_S8,
    seed_fraction: float = SEED_FRACTION,
    m_sp0: float = DEFAULT_M_SP0,
) -> ParameterSet:
    """Nominal parameter set for one chain variant.

    Initial dissolved masses default to ``m0_s8`` for S8 and
    ``seed_fraction * m0_s8`` for every downstream species.
    """
    model = build_model(model_id)
    mid = model.model_id
    m0 = (m0_s8,) + tuple(seed_fraction * m0_s8 for _ in range(model.n_species - 1))
    params = ParameterSet(
        e0=_NOMINAL_E0[mid],
        i0=_NOMINAL_I0[mid],
        a_v0=1.0,
        v=0.0114,
        gamma=1.5,
        omega=0.1,
        k_p=22.0,
        s_sat=1e-4,
        m0=m0,
        m_sp0=m_sp0,
    )
    params.validate(model)
    return params


def default_theta_paths(model: ReactionModel) -> list[str]:
    """Default identification target: all standard potentials plus the
    porosity exponent, porosity sensitivity, and initial S8 loading."""
    paths = [f"E0[{j + 1}]" for j in range(model.n_reactions)]
    paths += ["gamma", "omega", "m0[S8]"]
    return paths


def c_rate_current(params: ParameterSet, c_rate: float) -> float:
    """Convert a C-rate to a current [A] against the theoretical capacity of
    the initial S8 loading at this parameter set's scale."""
    return c_rate * SULFUR_CAPACITY_MAH_G * 1e-3 * params.m0[0]
