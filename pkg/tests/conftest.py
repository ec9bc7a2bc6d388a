import pytest

from liscell.engine import SimulationConfig, simulate
from liscell.parameters import c_rate_current, nominal_parameters


@pytest.fixture(scope="session")
def nominal_trace():
    """Session-cached nominal 0.3C discharge per model id."""
    cache = {}

    def get(model_id: int):
        if model_id not in cache:
            params = nominal_parameters(model_id)
            config = SimulationConfig(current=c_rate_current(params, 0.3))
            cache[model_id] = simulate(model_id, params, config)
        return cache[model_id]

    return get
