"""Time-varying-parameter VECMs with stochastic volatility, horseshoe
shrinkage and ex-post sparsification of every posterior draw."""

__version__ = "0.1.0"

from .data import DeterministicRecipe, Design, Panel, build_design, load_panel  # noqa: E402
from .errors import (ContractError, DataError, NumericalError, SchemaError,  # noqa: E402
                     TVPVECMError, ValidationError)
from .sampler import DrawArchive, ModelConfig, resparsify, run_mcmc  # noqa: E402

__all__ = [
    "ContractError", "DataError", "DeterministicRecipe", "Design", "DrawArchive",
    "ModelConfig", "NumericalError", "Panel", "SchemaError", "TVPVECMError",
    "ValidationError", "build_design", "load_panel", "resparsify", "run_mcmc",
]
