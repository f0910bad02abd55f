"""Permutation feature importance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from ..errors import ConfigError
from ..metrics import HIGHER_BETTER, score
from ._players import players_of, predictor, values_of


@dataclass(frozen=True)
class ImportanceReport:
    features: tuple[str, ...]
    drops: np.ndarray  # repeats x features
    baseline: float
    metric: str

    @property
    def mean(self) -> np.ndarray:
        return self.drops.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.drops.std(axis=0, ddof=1) if len(self.drops) > 1 else np.zeros(len(self.features))

    @property
    def rank(self) -> np.ndarray:
        return rankdata(-self.mean, method="ordinal").astype(int)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "feature": list(self.features),
            "importance_mean": self.mean,
            "importance_std": self.std,
            "rank": self.rank,
        })


def permutation_importance(model, X, y, metric: str = "rmse", repeats: int = 5, seed: int = 0,
                           weights=None) -> ImportanceReport:
    """Mean loss increase when one feature (or one-hot block) is shuffled.

    Every (repeat, feature) pair uses a fresh permutation; the drop is
    oriented so that larger always means more important.
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if metric not in HIGHER_BETTER:
        raise ConfigError(f"unknown metric {metric!r}")
    f = predictor(model)
    A = values_of(X)
    y = np.asarray(y, dtype=float)
    players = players_of(X)
    sign = 1.0 if HIGHER_BETTER[metric] else -1.0
    baseline = score(y, f(A), weights)[metric]
    rng = np.random.default_rng(seed)
    drops = np.empty((repeats, len(players)))
    for r in range(repeats):
        for j, pl in enumerate(players):
            cols = list(pl.columns)
            shuffled = A.copy()
            shuffled[:, cols] = A[rng.permutation(len(A))][:, cols]
            drops[r, j] = sign * (baseline - score(y, f(shuffled), weights)[metric])
    return ImportanceReport(tuple(p.name for p in players), drops, float(baseline), metric)
