"""Compiled extension vs pure-Python kernel: same inputs, same numbers.

Both backends implement one algorithm over one flattened data layout; the
fallback exists for installs without a C toolchain, so anything observable —
step sequence, termination, voltages — must agree to rounding noise at most.
"""

import numpy as np
import pytest

from liscell import _core_py, kernel
from liscell.catalog import build_model
from liscell.engine import SimulationConfig
from liscell.parameters import c_rate_current, nominal_parameters

pytestmark = pytest.mark.skipif(
    not kernel.COMPILED, reason="compiled kernel not available"
)


def _both_packs(mid):
    from liscell import _core

    model = build_model(mid)
    params = nominal_parameters(mid)
    return (
        model,
        params,
        kernel.build_pack(model, params, impl=_core),
        kernel.build_pack(model, params, impl=_core_py),
    )


def _run(impl, pack, model, params, config):
    y0 = kernel.initial_state(model, params)
    return impl.simulate_core(
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


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_solve_once_parity(mid):
    from liscell import _core

    model, params, pk_c, pk_py = _both_packs(mid)
    y = kernel.initial_state(model, params)
    current = c_rate_current(params, 0.3)
    ctol = 1e-8 * current

    st_c, v_c, av_c, e_c, eta_c, ir_c = _core.solve_once(pk_c, y, current, ctol, -1.0)
    st_p, v_p, av_p, e_p, eta_p, ir_p = _core_py.solve_once(pk_py, y, current, ctol, -1.0)

    assert st_c == st_p == kernel.SOLVE_OK
    assert v_c == pytest.approx(v_p, abs=1e-13)
    assert av_c == pytest.approx(av_p, abs=1e-13)
    np.testing.assert_allclose(e_c, e_p, rtol=0, atol=1e-13)
    np.testing.assert_allclose(eta_c, eta_p, rtol=0, atol=1e-13)
    np.testing.assert_allclose(ir_c, ir_p, rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("mid", [1, 4])
def test_rhs_once_parity(mid):
    from liscell import _core

    model, params, pk_c, pk_py = _both_packs(mid)
    y = kernel.initial_state(model, params)
    current = c_rate_current(params, 0.3)
    ctol = 1e-8 * current

    st_c, dy_c, v_c, av_c, _, _, _ = _core.rhs_once(pk_c, y, current, ctol, -1.0)
    st_p, dy_p, v_p, av_p, _, _, _ = _core_py.rhs_once(pk_py, y, current, ctol, -1.0)

    assert st_c == st_p == kernel.SOLVE_OK
    assert v_c == pytest.approx(v_p, abs=1e-13)
    np.testing.assert_allclose(dy_c, dy_p, rtol=1e-12, atol=1e-20)


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_full_discharge_parity(mid):
    from liscell import _core

    model, params, pk_c, pk_py = _both_packs(mid)
    config = SimulationConfig(current=c_rate_current(params, 0.3))

    res_c = _run(_core, pk_c, model, params, config)
    res_p = _run(_core_py, pk_py, model, params, config)

    # identical control flow: same acceptance sequence, same stop reason
    assert res_c["termination"] == res_p["termination"]
    assert res_c["naccept"] == res_p["naccept"]
    assert res_c["nreject"] == res_p["nreject"]
    assert res_c["t"].shape == res_p["t"].shape

    assert res_c["t_end"] == pytest.approx(res_p["t_end"], rel=1e-12, abs=1e-9)
    np.testing.assert_allclose(res_c["t"], res_p["t"], rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(res_c["v"], res_p["v"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(res_c["y"], res_p["y"], rtol=1e-10, atol=1e-18)


def test_engine_uses_compiled_backend_by_default():
    assert kernel.backend_name() == "compiled"
    assert kernel.backend() is not _core_py
