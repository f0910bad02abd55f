"""Regression scores (R², RMSE, MedAE, RRSE) and k-fold cross-validated scoring."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from .dataset import FeatureMatrix, FoldAssignment
from .errors import DataError, TransitBenchError

METRICS = ("r2", "rmse", "medae", "rrse")
HIGHER_BETTER = {"r2": True, "rmse": False, "medae": False, "rrse": False}


@dataclass(frozen=True)
class FoldScore:
    fold: int
    r2: float
    rmse: float
    medae: float
    rrse: float
    n: int

    def __getitem__(self, metric: str) -> float:
        return getattr(self, metric)


def weighted_median(values, weights=None) -> float:
    """Median; for weights, the smallest value whose cumulative weight reaches half.

    When the cumulative weight hits exactly one half, the two straddling
    values are averaged, which reduces to the usual even-length rule for
    equal weights.
    """
    v = np.asarray(values, dtype=float)
    if weights is None:
        return float(np.median(v))
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cw = np.cumsum(w)
    half = cw[-1] / 2.0
    i = int(np.searchsorted(cw, half))
    if math.isclose(cw[i], half, rel_tol=1e-12) and i + 1 < len(v):
        return float(0.5 * (v[i] + v[i + 1]))
    return float(v[i])


def score(y, yhat, weights=None, fold: int = -1) -> FoldScore:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if len(y) < 2:
        raise DataError("need at least 2 observations to score")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise DataError("weights length mismatch")
    ybar = np.sum(w * y) / np.sum(w)
    sse = np.sum(w * (y - yhat) ** 2)
    sst = np.sum(w * (y - ybar) ** 2)
    if not sst > 0:
        raise DataError("target has zero variance; R2 and RRSE are undefined")
    ratio = sse / sst
    return FoldScore(
        fold=fold,
        r2=float(1.0 - ratio),
        rmse=float(np.sqrt(sse / np.sum(w))),
        medae=weighted_median(np.abs(y - yhat), None if weights is None else w),
        rrse=float(np.sqrt(ratio)),
        n=len(y),
    )


class FoldError(TransitBenchError):
    """A failure inside one cross-validation fold; keeps the original exit code."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.exit_code = getattr(cause, "exit_code", 1)


def _rows(X, idx):
    return X.take(idx) if isinstance(X, FeatureMatrix) else np.asarray(X)[idx]


def cv_score(
    fitter: Callable[[FeatureMatrix, np.ndarray, np.ndarray | None], Callable] | np.ndarray,
    X: FeatureMatrix,
    y,
    folds: FoldAssignment,
    weights=None,
    fit_weighted: bool = False,
) -> list[FoldScore]:
    """Score a model family on every held-out fold.

    ``fitter`` is a RegressorSpec, or any ``fitter(X_train, y_train, w_train)``
    returning a predictor callable; pass a full-length prediction vector
    instead to score externally produced (already cross-validated)
    predictions fold by fold.
    """
    from .models import RegressorSpec, fit

    if isinstance(fitter, RegressorSpec):
        spec = fitter
        fitter = lambda Xt, yt, wt: fit(spec, Xt, yt, wt)  # noqa: E731
    y = np.asarray(y, dtype=float)
    w = None if weights is None else np.asarray(weights, dtype=float)
    out = []
    for i in range(folds.k):
        train, test = folds.train_test(i)
        try:
            if callable(fitter):
                model = fitter(_rows(X, train), y[train], None if (w is None or not fit_weighted) else w[train])
                yhat = model(_rows(X, test))
            else:
                yhat = np.asarray(fitter, dtype=float)[test]
            out.append(score(y[test], yhat, None if w is None else w[test], fold=i))
        except TransitBenchError as exc:
            raise FoldError(i, exc) from exc
    return out


def scores_frame(results: Mapping[str, Sequence[FoldScore]]) -> pd.DataFrame:
    """Long table: one row per (fold, model) with one column per metric."""
    rows = []
    for name, fold_scores in results.items():
        for fs in fold_scores:
            d = asdict(fs)
            rows.append({"fold": d.pop("fold"), "model": name, **{m: d[m] for m in METRICS}, "n": d["n"]})
    return pd.DataFrame(rows).sort_values(["fold", "model"], kind="stable").reset_index(drop=True)


def score_matrix_frame(results: Mapping[str, Sequence[FoldScore]]) -> pd.DataFrame:
    """Wide table: rows = folds, columns = ``model:metric``."""
    cols = {}
    for name, fold_scores in results.items():
        for m in METRICS:
            cols[f"{name}:{m}"] = [fs[m] for fs in fold_scores]
    frame = pd.DataFrame(cols)
    frame.insert(0, "fold", [fs.fold for fs in next(iter(results.values()))])
    return frame


def summary_frame(results: Mapping[str, Sequence[FoldScore]], percent: bool = True) -> pd.DataFrame:
    """Mean and sample standard deviation per model and metric, as percentages by default."""
    scale = 100.0 if percent else 1.0
    rows = []
    for name, fold_scores in results.items():
        row = {"model": name}
        for m in METRICS:
            vals = np.array([fs[m] for fs in fold_scores]) * scale
            row[f"{m}_mean"] = vals.mean()
            row[f"{m}_std"] = vals.std(ddof=1) if len(vals) > 1 else 0.0
        rows.append(row)
    return pd.DataFrame(rows)
