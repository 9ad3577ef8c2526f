"""gsakit: global sensitivity analysis toolkit."""

__version__ = "0.1.0"

from .core import (InputSpace, Normal, Uniform, builtin, builtin_truth, evaluate, make_rng,
                   sample)
from .errors import (ConfigError, ConstructionError, EvaluationError, FitError, GivenDataError,
                     GsaError, MethodPreconditionError, RegistryError)
from .variance import fast_indices, main_effect_curves, pick_freeze_design, sobol_estimate
