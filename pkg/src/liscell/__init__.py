"""liscell: zero-dimensional lithium-sulfur cell models.

Discharge simulation for a family of polysulfide reduction chains
(2-, 3-, 4- and 5-step), parameter sensitivity sweeps, exact
model-scale/prototype-scale conversion, and least-squares parameter
identification against measured discharge curves.
"""

__version__ = "0.1.0"

from .catalog import ModelId, ReactionModel, build_model
from .parameters import (
    ParameterSet,
    PhysicalConstants,
    c_rate_current,
    nominal_parameters,
)

__all__ = [
    "ModelId",
    "ReactionModel",
    "build_model",
    "ParameterSet",
    "PhysicalConstants",
    "nominal_parameters",
    "c_rate_current",
    "__version__",
]
