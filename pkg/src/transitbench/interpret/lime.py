"""Local linear surrogates around one instance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ._players import players_of, predictor, values_of


@dataclass(frozen=True)
class LimeExplanation:
    features: tuple[str, ...]
    intercept: float
    weights: np.ndarray  # zero for features outside the selected K
    selected: tuple[str, ...]
    kernel_width: float
    r2: float
    num_samples: int
    seed: int
    prediction: float

    def to_dict(self) -> dict:
        return {
            "method": "lime",
            "intercept": self.intercept,
            "weights": dict(zip(self.features, self.weights.tolist())),
            "selected": list(self.selected),
            "kernel_width": self.kernel_width,
            "surrogate_r2": self.r2,
            "num_samples": self.num_samples,
            "seed": self.seed,
            "prediction": self.prediction,
        }


def _weighted_corr(a, b, w):
    am = a - np.average(a, weights=w)
    bm = b - np.average(b, weights=w)
    den = math.sqrt(np.sum(w * am**2) * np.sum(w * bm**2))
    return 0.0 if den == 0 else float(np.sum(w * am * bm) / den)


def lime_explain(model, x, X_train, num_samples: int = 5000, K: int | None = None,
                 kernel_width: float | None = None, seed: int = 0) -> LimeExplanation:
    """Weighted least-squares surrogate fitted on perturbations around ``x``.

    Numeric features get Gaussian noise with the training standard deviation;
    categorical features (binary or one-hot blocks) are resampled from their
    training frequencies. The surrogate uses raw numeric values and
    "same category as x" indicators, so linear black boxes are recovered in
    their own units.
    """
    players = players_of(X_train)
    p = len(players)
    K = p if K is None else int(K)
    if not 1 <= K <= p:
        raise ConfigError(f"K must be in [1, {p}]")
    if num_samples < 10 * K:
        raise ConfigError(f"num_samples must be >= 10*K = {10 * K}")
    width = 0.75 * math.sqrt(p) if kernel_width is None else float(kernel_width)
    if not width > 0:
        raise ConfigError("kernel_width must be positive")
    A = values_of(X_train)
    x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    rng = np.random.default_rng(seed)

    Z = np.repeat(x[None, :], num_samples, axis=0)
    design = np.empty((num_samples, p))
    dist2 = np.zeros(num_samples)
    for j, pl in enumerate(players):
        cols = list(pl.columns)
        if pl.categorical:
            levels, counts = np.unique(A[:, cols], axis=0, return_counts=True)
            pick = levels[rng.choice(len(levels), size=num_samples, p=counts / counts.sum())]
            Z[:, cols] = pick
            same = np.all(pick == x[cols], axis=1).astype(float)
            design[:, j] = same
            dist2 += 1.0 - same
        else:
            sd = A[:, cols[0]].std()
            if sd == 0:
                design[:, j] = x[cols[0]]
                continue
            noise = rng.standard_normal(num_samples)
            Z[:, cols[0]] = x[cols[0]] + sd * noise
            design[:, j] = Z[:, cols[0]]
            dist2 += noise**2
    kw = np.exp(-dist2 / width**2)
    f = predictor(model)
    yz = f(Z)

    spread = np.array([np.average((d - np.average(d, weights=kw)) ** 2, weights=kw) for d in design.T])
    usable = np.flatnonzero(spread > 1e-12)
    if len(usable) < K:
        raise DataError(f"perturbations vary only {len(usable)} feature(s); cannot select K={K}")
    corr = np.array([abs(_weighted_corr(design[:, j], yz, kw)) for j in usable])
    chosen = np.sort(usable[np.argsort(-corr, kind="stable")[:K]])

    D = np.column_stack([np.ones(num_samples), design[:, chosen]])
    sw = np.sqrt(kw)
    coef, *_ = np.linalg.lstsq(D * sw[:, None], yz * sw, rcond=None)
    fitted = D @ coef
    ybar = np.average(yz, weights=kw)
    sst = np.sum(kw * (yz - ybar) ** 2)
    r2 = 1.0 - np.sum(kw * (yz - fitted) ** 2) / sst if sst > 0 else 1.0
    weights = np.zeros(p)
    weights[chosen] = coef[1:]
    return LimeExplanation(
        tuple(pl.name for pl in players), float(coef[0]), weights,
        tuple(players[j].name for j in chosen), width, float(r2), int(num_samples), int(seed),
        float(f(x[None, :])[0]),
    )
