"""Reaction catalog for the four polysulfide reduction chains.

A cell model is a chain of single-electron electrochemical reductions that
carries sulfur from dissolved S8 down to the monomer anion S^2-.  Four chain
variants are supported, differing only in which intermediate polysulfides they
resolve:

===== ==========================================
model dissolved species (reduction order)
===== ==========================================
1     S8, S4^2-, S^2-
2     S8, S6^2-, S4^2-, S^2-
3     S8, S8^2-, S6^2-, S4^2-, S^2-
4     S8, S8^2-, S6^2-, S4^2-, S2^2-, S^2-
===== ==========================================

Stoichiometric coefficients are stored as exact rationals so that sulfur and
charge balances hold identically, not merely to rounding.  Products carry
positive coefficients, reactants negative ones; every reaction transfers one
electron.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

import numpy as np

__all__ = [
    "ModelId",
    "Species",
    "ReactionModel",
    "build_model",
    "SPECIES_TABLE",
]


class ModelId(IntEnum):
    """Identifier of a reduction-chain variant (number of species grows with it)."""

    M1 = 1
    M2 = 2
    M3 = 3
    M4 = 4


@dataclass(frozen=True)
class Species:
    """One dissolved sulfur species.

    Attributes
    ----------
    name : str
        Display name, e.g. ``"S4^2-"``.
    n_sulfur : int
        Number of sulfur atoms per formula unit.
    charge : int
        Ionic charge (0 for S8, -2 for the polysulfide anions).
    """

    name: str
    n_sulfur: int
    charge: int


# All species that can appear in a chain, keyed by display name.
SPECIES_TABLE: dict[str, Species] = {
    "S8": Species("S8", 8, 0),
    "S8^2-": Species("S8^2-", 8, -2),
    "S6^2-": Species("S6^2-", 6, -2),
    "S4^2-": Species("S4^2-", 4, -2),
    "S2^2-": Species("S2^2-", 2, -2),
    "S^2-": Species("S^2-", 1, -2),
}

_F = Fraction

# Reduction chains: per model, an ordered species list and one
# {species: coefficient} map per electron-transfer step.
_CHAINS: dict[ModelId, tuple[tuple[str, ...], tuple[dict[str, Fraction], ...]]] = {
    ModelId.M1: (
        ("S8", "S4^2-", "S^2-"),
        (
            {"S8": _F(-1, 4), "S4^2-": _F(1, 2)},
            {"S4^2-": _F(-1, 6), "S^2-": _F(2, 3)},
        ),
    ),
    ModelId.M2: (
        ("S8", "S6^2-", "S4^2-", "S^2-"),
        (
            {"S8": _F(-3, 8), "S6^2-": _F(1, 2)},
            {"S6^2-": _F(-1), "S4^2-": _F(3, 2)},
            {"S4^2-": _F(-1, 6), "S^2-": _F(2, 3)},
        ),
    ),
    ModelId.M3: (
        ("S8", "S8^2-", "S6^2-", "S4^2-", "S^2-"),
        (
            {"S8": _F(-1, 2), "S8^2-": _F(1, 2)},
            {"S8^2-": _F(-3, 2), "S6^2-": _F(2)},
            {"S6^2-": _F(-1), "S4^2-": _F(3, 2)},
            {"S4^2-": _F(-1, 6), "S^2-": _F(2, 3)},
        ),
    ),
    ModelId.M4: (
        ("S8", "S8^2-", "S6^2-", "S4^2-", "S2^2-", "S^2-"),
        (
            {"S8": _F(-1, 2), "S8^2-": _F(1, 2)},
            {"S8^2-": _F(-3, 2), "S6^2-": _F(2)},
            {"S6^2-": _F(-1), "S4^2-": _F(3, 2)},
            {"S4^2-": _F(-1, 2), "S2^2-": _F(1)},
            {"S2^2-": _F(-1, 2), "S^2-": _F(1)},
        ),
    ),
}


@dataclass(frozen=True)
class ReactionModel:
    """One reduction chain: species list plus exact stoichiometry.

    Attributes
    ----------
    model_id : ModelId
        Which chain variant this is.
    species : tuple[Species, ...]
        Dissolved species in reduction order; S8 first, S^2- last.
    stoich : tuple[tuple[Fraction, ...], ...]
        ``stoich[i][j]`` is the coefficient of species ``i`` in reaction ``j``
        (products positive, reactants negative).  Shape ``n_species x
        n_reactions`` with ``n_reactions == n_species - 1``.
    electrons : tuple[int, ...]
        Electrons transferred per reaction (one each).
    """

    model_id: ModelId
    species: tuple[Species, ...]
    stoich: tuple[tuple[Fraction, ...], ...]
    electrons: tuple[int, ...]

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.electrons)

    @property
    def species_names(self) -> tuple[str, ...]:
        return tuple(sp.name for sp in self.species)

    def species_index(self, name: str) -> int:
        """Index of a species by display name (raises ``KeyError`` if absent)."""
        for i, sp in enumerate(self.species):
            if sp.name == name:
                return i
        raise KeyError(f"species {name!r} not in model {int(self.model_id)}")

    def stoich_array(self) -> np.ndarray:
        """Stoichiometry as a float array, shape ``(n_species, n_reactions)``."""
        return np.array(
            [[float(c) for c in row] for row in self.stoich], dtype=float
        )

    def sulfur_counts(self) -> np.ndarray:
        """Sulfur atoms per species as a float vector."""
        return np.array([sp.n_sulfur for sp in self.species], dtype=float)


def _validate(model: ReactionModel) -> None:
    q, p = model.n_species, model.n_reactions
    if p != q - 1:
        raise ValueError("chain must have exactly one reaction per reduction step")
    if model.species[0].name != "S8" or model.species[-1].name != "S^2-":
        raise ValueError("chain must start at S8 and end at S^2-")
    for j in range(p):
        sulfur = sum(model.stoich[i][j] * model.species[i].n_sulfur for i in range(q))
        if sulfur != 0:
            raise ValueError(f"reaction {j + 1} does not conserve sulfur: {sulfur}")
        charge = sum(model.stoich[i][j] * model.species[i].charge for i in range(q))
        if charge != -model.electrons[j]:
            raise ValueError(f"reaction {j + 1} does not balance charge: {charge}")
    # The monomer anion must be produced by the final reaction alone: its mass
    # balance is bookkept jointly with the precipitate sink.
    last = q - 1
    producers = [j for j in range(p) if model.stoich[last][j] != 0]
    if producers != [p - 1]:
        raise ValueError("S^2- must appear in the final reaction only")


def build_model(model_id: ModelId | int) -> ReactionModel:
    """Construct (and validate) one of the four reduction-chain models.

    Parameters
    ----------
    model_id : ModelId or int
        Chain variant, 1 through 4.

    Returns
    -------
    ReactionModel
        Frozen catalog entry with exact stoichiometry.
    """
    mid = ModelId(model_id)
    names, reactions = _CHAINS[mid]
    species = tuple(SPECIES_TABLE[n] for n in names)
    q, p = len(species), len(reactions)
    stoich = tuple(
        tuple(reactions[j].get(names[i], _F(0)) for j in range(p)) for i in range(q)
    )
    model = ReactionModel(
        model_id=mid,
        species=species,
        stoich=stoich,
        electrons=tuple(1 for _ in range(p)),
    )
    _validate(model)
    return model
