"""Backend selection and model packing for the integration kernel.

The compiled extension (``liscell._core``) and its pure-Python twin
(``liscell._core_py``) export the same functions over the same flattened
data layout.  The compiled module wins when importable; setting the
environment variable ``LISCELL_PURE_PYTHON=1`` forces the fallback, which is
how the parity tests and the benchmark pin each side.
"""

from __future__ import annotations

import math
import os

from . import _core_py
from .catalog import ReactionModel
from .parameters import ParameterSet

# dissolved-species concentration floor [mol/L]: below this a species counts
# as exhausted; the run stops only if reactions consuming it still need to
# carry current (an exhausted species riding its equilibrium tail is benign)
CONC_FLOOR = 1e-12

if os.environ.get("LISCELL_PURE_PYTHON", "") == "1":
    _impl = _core_py
    COMPILED = False
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        COMPILED = True
    except ImportError:
        _impl = _core_py
        COMPILED = False

# status / termination codes are defined identically in both backends;
# re-export from the reference module so they exist even if only one built
SOLVE_OK = _core_py.SOLVE_OK
SOLVE_NO_BRACKET = _core_py.SOLVE_NO_BRACKET
SOLVE_NON_FINITE = _core_py.SOLVE_NON_FINITE
TERM_VOLTAGE_CUTOFF = _core_py.TERM_VOLTAGE_CUTOFF
TERM_POROSITY_FLOOR = _core_py.TERM_POROSITY_FLOOR
TERM_SPECIES_DEPLETED = _core_py.TERM_SPECIES_DEPLETED
TERM_HORIZON = _core_py.TERM_HORIZON
TERM_SOLVER_FAILURE = _core_py.TERM_SOLVER_FAILURE


def backend():
    """Return the active kernel module."""
    return _impl


def backend_name() -> str:
    return "compiled" if COMPILED else "pure-python"


def build_pack(model: ReactionModel, params: ParameterSet, impl=None):
    """Flatten a reaction model + parameter set into a kernel pack.

    ``impl`` overrides the backend (used by the parity tests to build packs
    for both sides from the same inputs).
    """
    mod = impl if impl is not None else _impl
    q = model.n_species
    p = model.n_reactions
    c = params.constants
    ms = c.molar_mass_s
    rt = c.gas * c.temperature

    sto = [0.0] * (q * p)
    wmat = [0.0] * (q * p)
    for i, sp in enumerate(model.species):
        for j in range(p):
            s = float(model.stoich[i][j])
            sto[i * p + j] = s
            wmat[i * p + j] = (sp.n_sulfur * ms) / (model.electrons[j] * c.faraday) * s

    ln_cref = [0.0] * q
    floor_mass = [0.0] * q
    lm0 = [0.0] * q
    for i, sp in enumerate(model.species):
        ref = sp.n_sulfur * ms * params.v
        ln_cref[i] = math.log(ref)
        floor_mass[i] = CONC_FLOOR * ref
        lm0[i] = math.log(max(params.m0[i], floor_mass[i]))

    c_nernst = [rt / (ne * c.faraday) for ne in model.electrons]
    c_bv = c.faraday / (2.0 * rt)

    return mod.make_pack(
        q, p, sto, wmat, list(params.e0), list(params.i0),
        lm0, ln_cref, floor_mass, c_nernst, c_bv,
        params.a_v0, params.gamma, params.omega, params.k_p, params.s_sat,
    )


def initial_state(model: ReactionModel, params: ParameterSet):
    """Initial state vector [m_1..m_q, m_Sp, eps] as a plain list."""
    y0 = [float(m) for m in params.m0]
    y0.append(float(params.m_sp0))
    y0.append(1.0)
    return y0
