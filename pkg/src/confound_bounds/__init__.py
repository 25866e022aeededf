"""Sharp bounds on the average treatment effect as a function of the proportion of
confounded units, with cross-fitted estimators, confidence bands and eps_0."""

from .bounds import (
    BoundsCurve,
    Population,
    bound_width,
    estimate_bounds,
    plug_in_bounds,
    rearrange,
    trim_terms,
)
from .core import (
    MODELS,
    X_MIXTURE,
    XA_MIXTURE,
    ConfoundBoundsError,
    Dataset,
    SensitivityConfig,
    ValidationError,
    make_folds,
    make_rng,
    validate_dataset,
)
from .inference import (
    BandSet,
    EpsilonZero,
    estimate_epsilon0,
    imbens_manski_band,
    imbens_manski_critical_value,
    multiplier_bootstrap_bands,
)
from .nuisance import NuisanceFit, fit_cross_fitted
from .oracle import FiniteInstance, lp_sharp_bounds, oracle_suite
from .simulation import DgpConfig, oracle_truth, run_study

__all__ = [
    "BandSet", "BoundsCurve", "ConfoundBoundsError", "Dataset", "DgpConfig", "EpsilonZero", "FiniteInstance",
    "MODELS", "NuisanceFit", "Population", "SensitivityConfig", "ValidationError", "XA_MIXTURE", "X_MIXTURE",
    "bound_width", "estimate_bounds", "estimate_epsilon0", "fit_cross_fitted", "imbens_manski_band",
    "imbens_manski_critical_value", "lp_sharp_bounds", "make_folds", "make_rng", "multiplier_bootstrap_bands",
    "oracle_suite", "oracle_truth", "plug_in_bounds", "rearrange", "run_study", "trim_terms", "validate_dataset",
]
