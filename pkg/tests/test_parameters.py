import dataclasses
import math

import pytest

from liscell.catalog import build_model
from liscell.parameters import (
    DEFAULT_M0_S8,
    SEED_FRACTION,
    PhysicalConstants,
    c_rate_current,
    default_theta_paths,
    nominal_parameters,
)


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_nominal_validates(mid):
    model = build_model(mid)
    params = nominal_parameters(mid)
    params.validate(model)  # must not raise
    assert len(params.e0) == model.n_reactions
    assert len(params.m0) == model.n_species


def test_nominal_seed_masses():
    params = nominal_parameters(3)
    assert params.m0[0] == DEFAULT_M0_S8
    for m in params.m0[1:]:
        assert m == SEED_FRACTION * DEFAULT_M0_S8


def test_constants_defaults():
    c = PhysicalConstants()
    assert c.faraday == 9.649e4
    assert c.gas == 8.3145
    assert c.temperature == 298.0
    assert c.molar_mass_s == 32.065


@pytest.mark.parametrize(
    "path",
    ["E0[1]", "i0[2]", "gamma", "omega", "k_p", "S_sat", "a_v0", "v", "m_Sp0", "m0[S^2-]"],
)
def test_get_set_round_trip(path):
    model = build_model(2)
    params = nominal_parameters(2)
    old = params.get(path, model)
    new = params.set(path, old * 1.25, model)
    assert new.get(path, model) == old * 1.25
    # untouched fields survive
    assert new.set(path, old, model) == params


def test_set_m0_s8_rescales_seeds():
    # changing the S8 loading scales the downstream seeds by the same factor
    model = build_model(4)
    params = nominal_parameters(4)
    new = params.set("m0[S8]", 2.0 * params.m0[0], model)
    for old_m, new_m in zip(params.m0, new.m0):
        assert new_m == pytest.approx(2.0 * old_m, rel=1e-15)


def test_set_m0_other_species_is_local():
    model = build_model(4)
    params = nominal_parameters(4)
    new = params.set("m0[S4^2-]", 0.123, model)
    idx = model.species_index("S4^2-")
    assert new.m0[idx] == 0.123
    for i, (old_m, new_m) in enumerate(zip(params.m0, new.m0)):
        if i != idx:
            assert new_m == old_m


@pytest.mark.parametrize(
    "path",
    ["E0[0]", "E0[3]", "i0[99]", "m0[S6^2-]", "E0", "banana", "m0[Fe]"],
)
def test_bad_paths_rejected(path):
    # M1 has two reactions and no S6^2- species
    model = build_model(1)
    params = nominal_parameters(1)
    with pytest.raises(KeyError):
        params.get(path, model)
    with pytest.raises(KeyError):
        params.set(path, 1.0, model)


def test_c_rate_current_value():
    params = nominal_parameters(1)
    # 0.3C on 2.8 g at 1672 mAh/g
    assert c_rate_current(params, 0.3) == pytest.approx(
        0.3 * 1.672 * 2.8, rel=1e-12
    )
    assert c_rate_current(params, 1.0) == pytest.approx(2.8 * 1.672, rel=1e-12)


def test_c_rate_tracks_loading():
    model = build_model(2)
    params = nominal_parameters(2).set("m0[S8]", 5.6, model)
    assert c_rate_current(params, 0.3) == pytest.approx(
        2.0 * c_rate_current(nominal_parameters(2), 0.3), rel=1e-12
    )


@pytest.mark.parametrize(
    "field,value",
    [
        ("a_v0", 0.0),
        ("v", -1.0),
        ("k_p", 0.0),
        ("s_sat", -1e-9),
        ("gamma", -0.1),
        ("omega", -0.5),
        ("m_sp0", 0.0),
    ],
)
def test_validate_rejects_nonpositive(field, value):
    model = build_model(1)
    params = dataclasses.replace(nominal_parameters(1), **{field: value})
    with pytest.raises(ValueError):
        params.validate(model)


def test_validate_rejects_wrong_lengths():
    model = build_model(3)
    params = nominal_parameters(2)  # three reactions' worth of values
    with pytest.raises(ValueError):
        params.validate(model)


def test_validate_rejects_nonpositive_potential():
    model = build_model(1)
    base = nominal_parameters(1)
    params = dataclasses.replace(base, e0=(2.4, 0.0))
    with pytest.raises(ValueError):
        params.validate(model)


def test_default_theta_paths():
    model = build_model(3)
    assert default_theta_paths(model) == [
        "E0[1]",
        "E0[2]",
        "E0[3]",
        "E0[4]",
        "gamma",
        "omega",
        "m0[S8]",
    ]
    # every advertised path resolves
    params = nominal_parameters(3)
    for path in default_theta_paths(model):
        assert math.isfinite(params.get(path, model))
