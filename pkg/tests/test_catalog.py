from fractions import Fraction

import numpy as np
import pytest

from liscell.catalog import SPECIES_TABLE, ModelId, build_model

# chain sizes are part of the public contract
EXPECTED_SHAPES = {
    1: (3, 2, ("S8", "S4^2-", "S^2-")),
    2: (4, 3, ("S8", "S6^2-", "S4^2-", "S^2-")),
    3: (5, 4, ("S8", "S8^2-", "S6^2-", "S4^2-", "S^2-")),
    4: (6, 5, ("S8", "S8^2-", "S6^2-", "S4^2-", "S2^2-", "S^2-")),
}


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_chain_shapes(mid):
    model = build_model(mid)
    n_species, n_reactions, names = EXPECTED_SHAPES[mid]
    assert model.n_species == n_species
    assert model.n_reactions == n_reactions
    assert model.species_names == names
    assert model.n_reactions == model.n_species - 1


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_stoichiometry_conserves_sulfur_exactly(mid):
    # per reaction, sulfur atoms created == destroyed (exact rationals)
    model = build_model(mid)
    for j in range(model.n_reactions):
        balance = sum(
            Fraction(sp.n_sulfur) * model.stoich[i][j]
            for i, sp in enumerate(model.species)
        )
        assert balance == 0, f"reaction {j + 1} unbalanced: {balance}"


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_single_electron_steps(mid):
    model = build_model(mid)
    assert model.electrons == (1,) * model.n_reactions


@pytest.mark.parametrize("mid", [1, 2, 3, 4])
def test_chain_structure(mid):
    # each reaction consumes exactly one species and produces exactly one,
    # one step further down the chain
    model = build_model(mid)
    arr = model.stoich_array()
    for j in range(model.n_reactions):
        consumed = np.nonzero(arr[:, j] < 0)[0]
        produced = np.nonzero(arr[:, j] > 0)[0]
        assert consumed.tolist() == [j]
        assert produced.tolist() == [j + 1]


def test_species_charges():
    assert SPECIES_TABLE["S8"].charge == 0
    for name, sp in SPECIES_TABLE.items():
        if name != "S8":
            assert sp.charge == -2
        assert sp.n_sulfur >= 1


def test_model_id_accepts_enum_and_int():
    assert build_model(ModelId.M2) == build_model(2)


def test_bad_model_id_rejected():
    with pytest.raises((ValueError, KeyError)):
        build_model(5)


def test_sulfur_counts_match_species():
    model = build_model(4)
    assert model.sulfur_counts().tolist() == [8, 8, 6, 4, 2, 1]


def test_species_index_lookup():
    model = build_model(3)
    assert model.species_index("S8") == 0
    assert model.species_index("S^2-") == model.n_species - 1
    with pytest.raises(KeyError):
        model.species_index("S3^2-")
