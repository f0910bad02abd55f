"""Friedman aligned-ranks test with Holm and Bergmann-Hommel pairwise post hoc.

Scores are arranged folds x algorithms. Each fold is centred on its mean,
the centred values are ranked jointly (1 = best, mid-ranks on ties), and the
column rank totals feed the omnibus statistic. Pairwise differences of mean
aligned ranks are compared with a normal approximation; the resulting p-values
are adjusted over all k(k-1)/2 hypotheses.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .errors import ConfigError, DataError
from .special import chi2_upper_tail, normal_two_sided

BH_MAX_K = 9


@dataclass(frozen=True)
class ScoreMatrix:
    values: np.ndarray
    names: tuple[str, ...]
    metric: str = "score"
    higher_better: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise DataError(f"score matrix needs n >= 2 folds and k >= 2 algorithms, got {v.shape}")
        if v.shape[1] != len(self.names):
            raise DataError("one name per algorithm column required")
        if not np.all(np.isfinite(v)):
            raise DataError("score matrix has non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_fold_scores(cls, results: Mapping[str, Sequence], metric: str, higher_better: bool):
        names = list(results)
        values = np.column_stack([[fs[metric] for fs in results[nm]] for nm in names])
        return cls(values, tuple(names), metric, higher_better)


@dataclass(frozen=True)
class AlignedRanks:
    ranks: np.ndarray
    aligned: np.ndarray
    col_totals: np.ndarray
    row_totals: np.ndarray
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def k(self) -> int:
        return self.ranks.shape[1]

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.col_totals / self.n


@dataclass(frozen=True)
class OmnibusResult:
    T: float
    df: int
    p: float
    mean_ranks: dict[str, float]
    degenerate: bool = False


@dataclass
class PairwiseResult:
    pairs: list[dict]
    alpha: float
    method: str
    names: tuple[str, ...] = field(default_factory=tuple)

    def adjusted_matrix(self, key: str = "p_bh") -> np.ndarray:
        k = len(self.names)
        M = np.ones((k, k))
        pos = {nm: i for i, nm in enumerate(self.names)}
        for pr in self.pairs:
            i, j = pos[pr["u"]], pos[pr["v"]]
            val = pr[key] if pr[key] is not None else pr["p_holm"]
            M[i, j] = M[j, i] = val
        return M

    def graph_edges(self) -> list[tuple[str, str]]:
        """Pairs NOT significantly different at ``alpha`` (edges of the rank graph)."""
        key = "p_bh" if self.method == "bergmann-hommel" else "p_holm"
        return [(p["u"], p["v"]) for p in self.pairs if p[key] >= self.alpha]


def align_ranks(scores: ScoreMatrix) -> AlignedRanks:
    v = scores.values
    # sorting before the mean keeps the fold mean independent of column order
    aligned = v - np.sort(v, axis=1).mean(axis=1, keepdims=True)
    key = -aligned if scores.higher_better else aligned
    ranks = rankdata(key.ravel(), method="average").reshape(aligned.shape)
    return AlignedRanks(ranks, aligned, ranks.sum(axis=0), ranks.sum(axis=1), scores.names)


def aligned_statistic(ranks: AlignedRanks) -> tuple[float, bool]:
    n, k = ranks.n, ranks.k
    kn = k * n
    num = (k - 1) * (np.sum(ranks.col_totals**2) - (k * n * n / 4.0) * (kn + 1) ** 2)
    den = kn * (kn + 1) * (2 * kn + 1) / 6.0 - np.sum(ranks.row_totals**2) / k
    if np.ptp(ranks.ranks) == 0 or den <= 0:
        return 0.0, True
    return max(float(num / den), 0.0), False


def friedman_aligned(scores: ScoreMatrix) -> OmnibusResult:
    ranks = align_ranks(scores)
    T, degenerate = aligned_statistic(ranks)
    p = 1.0 if degenerate else chi2_upper_tail(T, scores.k - 1)
    return OmnibusResult(T, scores.k - 1, p, dict(zip(scores.names, ranks.mean_ranks.tolist())), degenerate)


def pairwise_z(ranks: AlignedRanks) -> tuple[np.ndarray, np.ndarray]:
    """k x k matrices of z statistics and two-sided normal p-values."""
    n, k = ranks.n, ranks.k
    se = math.sqrt(k * (k * n + 1) / (6.0 * n))
    mr = ranks.mean_ranks
    z = (mr[:, None] - mr[None, :]) / se
    p = np.vectorize(normal_two_sided)(z)
    return z, p


def pair_labels(k: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(k), 2))


def holm(raw_p) -> np.ndarray:
    p = np.asarray(raw_p, dtype=float)
    m = len(p)
    if m < 1:
        raise DataError("holm needs at least one p-value")
    order = np.argsort(p, kind="stable")
    stepped = np.minimum((m - np.arange(m)) * p[order], 1.0)
    adj = np.empty(m)
    adj[order] = np.maximum.accumulate(stepped)
    return adj


def _set_partitions(items: tuple[int, ...]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first], *part]
        for i in range(len(part)):
            yield [*part[:i], [first, *part[i]], *part[i + 1:]]


@lru_cache(maxsize=None)
def exhaustive_sets(k: int) -> np.ndarray:
    """Boolean (sets x pairs) matrix of every non-empty exhaustive set of equality hypotheses.

    An exhaustive set is the collection of pairwise equalities implied by
    some partition of the k algorithms into groups of equals.
    """
    index = {pr: i for i, pr in enumerate(pair_labels(k))}
    rows = []
    for part in _set_partitions(tuple(range(k))):
        row = np.zeros(len(index), dtype=bool)
        for block in part:
            for a, b in itertools.combinations(sorted(block), 2):
                row[index[(a, b)]] = True
        if row.any():
            rows.append(row)
    return np.array(rows, dtype=bool).reshape(-1, len(index))


def bergmann_hommel(raw_p, k: int | None = None) -> np.ndarray:
    """Bergmann-Hommel adjusted p-values for all pairwise hypotheses.

    ``raw_p`` follows :func:`pair_labels` order. The adjusted value of H_i is
    ``min(1, max_{I exhaustive, i in I} |I| * min_{j in I} p_j)``.
    """
    p = np.asarray(raw_p, dtype=float)
    m = len(p)
    if k is None:
        k = int(round((1 + math.sqrt(1 + 8 * m)) / 2))
    if k * (k - 1) // 2 != m:
        raise DataError(f"{m} p-values do not form the pairs of k algorithms")
    if k > BH_MAX_K:
        raise ConfigError(f"Bergmann-Hommel enumeration is capped at k={BH_MAX_K}; use holm() for k={k}")
    E = exhaustive_sets(k)
    sizes = E.sum(axis=1)
    min_p = np.where(E, p[None, :], np.inf).min(axis=1)
    vals = sizes * min_p
    adj = np.where(E, vals[:, None], -np.inf).max(axis=0)
    return np.clip(np.minimum(adj, 1.0), p, 1.0)


def post_hoc(scores: ScoreMatrix, alpha: float = 0.05) -> PairwiseResult:
    ranks = align_ranks(scores)
    z, p = pairwise_z(ranks)
    labels = pair_labels(scores.k)
    raw = np.array([p[a, b] for a, b in labels])
    p_holm = holm(raw)
    if scores.k <= BH_MAX_K:
        p_bh, method = bergmann_hommel(raw, scores.k), "bergmann-hommel"
    else:
        p_bh, method = [None] * len(raw), "holm"
    pairs = []
    for i, (a, b) in enumerate(labels):
        pairs.append({
            "u": scores.names[a], "v": scores.names[b], "z": float(z[a, b]),
            "p_raw": float(raw[i]), "p_holm": float(p_holm[i]),
            "p_bh": None if p_bh[i] is None else float(p_bh[i]),
        })
    return PairwiseResult(pairs, alpha, method, scores.names)


def build_report(scores: ScoreMatrix, alpha: float = 0.05) -> dict:
    """JSON-ready omnibus + pairwise report for one metric."""
    omni = friedman_aligned(scores)
    ph = post_hoc(scores, alpha)
    return {
        "metric": scores.metric,
        "orientation": "higher-better" if scores.higher_better else "lower-better",
        "T": omni.T,
        "df": omni.df,
        "p": omni.p,
        "alpha": alpha,
        "reject": bool(omni.p < alpha),
        "degenerate": omni.degenerate,
        "mean_ranks": omni.mean_ranks,
        "post_hoc": ph.method,
        "pairs": ph.pairs,
        "not_different": [list(e) for e in ph.graph_edges()],
    }


def pvalue_heatmap_frame(scores: ScoreMatrix, alpha: float = 0.05) -> pd.DataFrame:
    ph = post_hoc(scores, alpha)
    M = ph.adjusted_matrix()
    frame = pd.DataFrame(M, columns=scores.names)
    frame.insert(0, "model", scores.names)
    return frame


def permutation_pvalue(scores: ScoreMatrix, n_perm: int = 10_000, seed: int = 0) -> float:
    """Permutation p-value of the aligned-ranks statistic, shuffling algorithms within folds."""
    rng = np.random.default_rng(seed)
    T_obs, _ = aligned_statistic(align_ranks(scores))
    v = scores.values
    hits = 0
    for _ in range(n_perm):
        perm = rng.permuted(v, axis=1)
        T, _ = aligned_statistic(align_ranks(ScoreMatrix(perm, scores.names, scores.metric, scores.higher_better)))
        hits += T >= T_obs - 1e-12
    return (hits + 1) / (n_perm + 1)
