"""Shapley values with an interventional value function.

``v(S)`` is the mean prediction over background rows whose features in S are
replaced by the explained instance's values. Exact enumeration visits all
2^p coalitions; the sampled estimator averages marginal contributions along
random feature orderings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ConfigError, DataError
from ._players import Player, players_of, predictor, values_of

EXACT_MAX_P = 15
_CHUNK_ROWS = 200_000


@dataclass(frozen=True)
class ShapExplanation:
    features: tuple[str, ...]
    phi: np.ndarray
    base: float
    prediction: float
    method: str
    background_ids: np.ndarray
    feature_values: tuple = ()
    residual_adjusted: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": list(self.features), "shap": self.phi})

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "base": self.base,
            "prediction": self.prediction,
            "phi": dict(zip(self.features, self.phi.tolist())),
            "background_ids": self.background_ids.tolist(),
            "residual_adjusted": self.residual_adjusted,
            **self.meta,
        }


def _background(X, background) -> tuple[np.ndarray, np.ndarray]:
    A = values_of(X)
    ids = np.arange(len(A)) if background is None else np.asarray(background, dtype=int)
    if ids.size == 0:
        raise DataError("background set is empty")
    return A[ids], ids


def _instance(x, width: int) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    if x.size != width:
        raise DataError(f"instance has {x.size} values, expected {width}")
    return x


def _player_masks(players: list[Player], width: int) -> np.ndarray:
    M = np.zeros((len(players), width), dtype=bool)
    for i, pl in enumerate(players):
        M[i, list(pl.columns)] = True
    return M


def _shapley_weights(p: int) -> np.ndarray:
    return np.array([math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p) for s in range(p)])


def coalition_values(f, x: np.ndarray, B: np.ndarray, pmask: np.ndarray) -> np.ndarray:
    """v(S) for every coalition bitmask S in 0 .. 2^p - 1."""
    p = pmask.shape[0]
    n_sets = 1 << p
    bits = (np.arange(n_sets)[:, None] >> np.arange(p)[None, :]) & 1
    colmask = (bits.astype(float) @ pmask.astype(float)) > 0  # sets x width
    out = np.empty(n_sets)
    per = max(1, _CHUNK_ROWS // len(B))
    for start in range(0, n_sets, per):
        cm = colmask[start:start + per]
        rows = np.where(cm[:, None, :], x[None, None, :], B[None, :, :]).reshape(-1, B.shape[1])
        out[start:start + per] = f(rows).reshape(len(cm), len(B)).mean(axis=1)
    return out


def shap_exact(model, x, X, background=None) -> ShapExplanation:
    """Exact Shapley values of one instance ``x`` against background rows of ``X``."""
    players = players_of(X)
    p = len(players)
    if p > EXACT_MAX_P:
        raise ConfigError(f"exact Shapley enumerates 2^p coalitions; p={p} > {EXACT_MAX_P}, use shap_sampled")
    B, ids = _background(X, background)
    x = _instance(x, B.shape[1])
    v = coalition_values(predictor(model), x, B, _player_masks(players, B.shape[1]))
    w = _shapley_weights(p)
    masks = np.arange(1 << p)
    sizes = np.array([bin(m).count("1") for m in masks])
    phi = np.empty(p)
    for i in range(p):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(w[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return ShapExplanation(
        tuple(pl.name for pl in players), phi, float(v[0]), float(v[-1]), "exact", ids,
        tuple(pl.label(x) for pl in players),
    )


def shap_sampled(model, x, X, background=None, n_coalitions: int = 2000, seed: int = 0) -> ShapExplanation:
    """Monte Carlo Shapley values over random orderings, in antithetic pairs.

    Each sampled ordering is paired with a random background row. The
    efficiency gap left by sampling is spread over features in proportion
    to ``|phi|`` and reported as ``residual_adjusted``.
    """
    players = players_of(X)
    p = len(players)
    if n_coalitions < 2 * p:
        raise ConfigError(f"n_coalitions must be >= 2p = {2 * p}")
    f = predictor(model)
    B, ids = _background(X, background)
    x = _instance(x, B.shape[1])
    pmask = _player_masks(players, B.shape[1])
    rng = np.random.default_rng(seed)
    half = (n_coalitions + 1) // 2
    orders = np.array([rng.permutation(p) for _ in range(half)])
    orders = np.concatenate([orders, orders[:, ::-1]])[:n_coalitions]
    refs = B[rng.integers(len(B), size=half)]
    refs = np.concatenate([refs, refs])[:n_coalitions]

    # rows: for each ordering, the reference with the first 0..p players switched to x
    m = len(orders)
    on = np.zeros((m, p + 1, p), dtype=bool)
    for step in range(1, p + 1):
        on[np.arange(m), step:, orders[:, step - 1]] = True
    colmask = (on.reshape(-1, p).astype(float) @ pmask.astype(float)) > 0
    rows = np.where(colmask, np.repeat(x[None, :], m * (p + 1), axis=0), np.repeat(refs, p + 1, axis=0))
    vals = f(rows).reshape(m, p + 1)
    contrib = np.diff(vals, axis=1)  # contribution of orders[:, step]
    phi = np.zeros(p)
    np.add.at(phi, orders.ravel(), contrib.ravel())
    phi /= m

    base = float(f(B).mean())
    pred = float(f(x[None, :])[0])
    residual = (pred - base) - phi.sum()
    scale = np.abs(phi).sum()
    phi = phi + (residual * np.abs(phi) / scale if scale > 0 else residual / p)
    return ShapExplanation(
        tuple(pl.name for pl in players), phi, base, pred, "sampled", ids,
        tuple(pl.label(x) for pl in players), float(residual), {"n_coalitions": int(n_coalitions), "seed": seed},
    )


def shap_many(model, X, rows, background=None, method: str = "exact", **kw) -> list[ShapExplanation]:
    A = values_of(X)
    if method == "exact":
        return [shap_exact(model, A[r], X, background) for r in rows]
    if method == "sampled":
        seed = kw.pop("seed", 0)
        return [shap_sampled(model, A[r], X, background, seed=seed + k, **kw) for k, r in enumerate(rows)]
    raise ConfigError(f"unknown Shapley method {method!r}; choose exact or sampled")


def beeswarm_frame(explanations: list[ShapExplanation], row_ids) -> pd.DataFrame:
    """Long table (instance, feature, shap, feature_value) for summary plots."""
    recs = []
    for rid, ex in zip(row_ids, explanations):
        for name, phi, val in zip(ex.features, ex.phi, ex.feature_values):
            recs.append({"instance": int(rid), "feature": name, "shap": float(phi), "feature_value": val})
    return pd.DataFrame(recs, columns=["instance", "feature", "shap", "feature_value"])
