from __future__ import annotations

import numpy as np

from ..errors import DataError, NumericError
from .base import FittedModel, as_array, feature_names_of, reference_columns, register_predictor


def fit_ols(X, y, sample_weight=None, ridge: float = 0.0) -> FittedModel:
    """Least squares with intercept.

    Nominal blocks of a FeatureMatrix are reference-coded (first level gets
    coefficient 0). Raises NumericError on a rank-deficient design unless
    ``ridge > 0``.
    """
    full = as_array(X)
    keep = reference_columns(X)
    A = full[:, keep]
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if len(y) != n:
        raise DataError("X and y lengths differ")
    if n <= p:
        raise DataError(f"ols needs n > p (n={n}, p={p})")
    D = np.hstack([np.ones((n, 1)), A])
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    sw = np.sqrt(w)
    Dw, yw = D * sw[:, None], y * sw
    if ridge > 0:
        pen = np.sqrt(ridge) * np.eye(p + 1)
        pen[0, 0] = 0.0  # intercept unpenalized
        Dw = np.vstack([Dw, pen])
        yw = np.concatenate([yw, np.zeros(p + 1)])
    else:
        rank = np.linalg.matrix_rank(Dw)
        if rank < p + 1:
            raise NumericError(
                f"singular design (rank {rank} < {p + 1}); remove duplicated or constant "
                "columns, or pass ridge > 0"
            )
    coef, *_ = np.linalg.lstsq(Dw, yw, rcond=None)
    resid = y - D @ coef
    beta = np.zeros(full.shape[1])
    beta[keep] = coef[1:]
    return FittedModel(
        "ols",
        {"intercept": float(coef[0]), "coef": beta},
        feature_names_of(X, full.shape[1]),
        {"converged": True, "iterations": 1, "final_loss": float(np.mean(resid**2))},
    )


@register_predictor("ols")
def _predict_ols(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return model.params["intercept"] + X @ np.asarray(model.params["coef"])
