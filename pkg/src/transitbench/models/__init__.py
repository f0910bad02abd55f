"""Seven regressor families behind one fit/predict contract."""
from __future__ import annotations

from .base import (
    DEFAULTS,
    FAMILIES,
    STATISTICAL,
    FittedModel,
    RegressorSpec,
    load_external_predictions,
    predict,
    save_external_predictions,
)
from .counts import fit_hurdle, fit_zinb
from .linear import fit_ols
from .mlp import fit_mlp
from .tree import fit_boost, fit_cart, fit_forest

_FITTERS = {
    "ols": fit_ols,
    "zinb": fit_zinb,
    "hurdle": fit_hurdle,
    "cart": fit_cart,
    "forest": fit_forest,
    "boost": fit_boost,
    "mlp": fit_mlp,
}


def fit(spec: RegressorSpec, X, y, sample_weight=None) -> FittedModel:
    """Fit the family named by ``spec`` with its resolved hyperparameters."""
    kwargs = spec.resolved()
    if spec.family in ("forest", "boost", "mlp"):
        kwargs["seed"] = spec.seed
    return _FITTERS[spec.family](X, y, sample_weight=sample_weight, **kwargs)


__all__ = [
    "DEFAULTS", "FAMILIES", "STATISTICAL", "FittedModel", "RegressorSpec", "fit", "predict",
    "fit_ols", "fit_zinb", "fit_hurdle", "fit_cart", "fit_forest", "fit_boost", "fit_mlp",
    "load_external_predictions", "save_external_predictions",
]
