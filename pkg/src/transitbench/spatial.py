"""Accessibility scenarios, hexagonal aggregation and SPAEF map similarity.

Hexagons are pointy-top with axial coordinates (q, r); ``size`` is the
flat-to-flat width, so the circumradius is ``size / sqrt(3)``. A point
belongs to the cell with the nearest center; exact ties (points on a shared
edge or vertex) go to the lowest (q, r).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from .dataset import FeatureMatrix
from .errors import ConfigError, DataError

SQRT3 = math.sqrt(3.0)
DEFAULT_DELTAS = tuple(range(0, 200_001, 10_000))
DEFAULT_BINS = 100
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class HexGrid:
    size: float = 1000.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.size > 0:
            raise ConfigError("hex size must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def radius(self) -> float:
        return self.size / SQRT3

    @classmethod
    def for_points(cls, xy, size: float = 1000.0) -> "HexGrid":
        """Grid anchored at the bounding-box minimum of ``xy``."""
        xy = np.asarray(xy, dtype=float)
        return cls(size, tuple(xy.min(axis=0)))

    def centers(self, q, r) -> tuple[np.ndarray, np.ndarray]:
        q, r = np.asarray(q, dtype=float), np.asarray(r, dtype=float)
        R = self.radius
        return self.origin[0] + R * SQRT3 * (q + r / 2.0), self.origin[1] + R * 1.5 * r

    def cell_of(self, xy) -> np.ndarray:
        """(n, 2) integer axial coordinates of the containing cells."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if not np.all(np.isfinite(xy)):
            raise DataError("coordinates must be finite")
        R = self.radius
        x = xy[:, 0] - self.origin[0]
        y = xy[:, 1] - self.origin[1]
        qf = (SQRT3 / 3.0 * x - y / 3.0) / R
        rf = (2.0 / 3.0 * y) / R
        q0, r0 = np.floor(qf), np.floor(rf)
        # the nearest lattice point is a corner of the enclosing axial parallelogram
        cand = np.stack([
            np.stack([q0 + dq, r0 + dr], axis=1) for dq, dr in ((0, 0), (0, 1), (1, 0), (1, 1))
        ], axis=1)  # n x 4 x 2, listed in increasing (q, r) order
        cx = R * SQRT3 * (cand[..., 0] + cand[..., 1] / 2.0)
        cy = R * 1.5 * cand[..., 1]
        d2 = (cx - x[:, None]) ** 2 + (cy - y[:, None]) ** 2
        near = d2 <= d2.min(axis=1, keepdims=True) + _TIE_RTOL * R * R
        pick = np.argmax(near, axis=1)  # first qualifying candidate = lowest (q, r)
        return cand[np.arange(len(xy)), pick].astype(np.int64)


@dataclass(frozen=True)
class HexMap:
    grid: HexGrid
    cells: Mapping[tuple[int, int], float]
    counts: Mapping[tuple[int, int], int] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.cells.values()))

    def to_frame(self) -> pd.DataFrame:
        keys = sorted(self.cells)
        q = np.array([k[0] for k in keys], dtype=np.int64)
        r = np.array([k[1] for k in keys], dtype=np.int64)
        cx, cy = self.grid.centers(q, r)
        return pd.DataFrame({
            "q": q, "r": r, "center_x": cx, "center_y": cy,
            "value": [self.cells[k] for k in keys],
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def hex_bin(xy, values, grid: HexGrid) -> HexMap:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    if len(values) != len(xy):
        raise DataError("one value per point required")
    cells = grid.cell_of(xy) if len(xy) else np.empty((0, 2), dtype=np.int64)
    keys, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    sums = np.bincount(inverse, weights=values, minlength=len(keys))
    counts = np.bincount(inverse, minlength=len(keys))
    tk = [tuple(int(v) for v in k) for k in keys]
    return HexMap(grid, dict(zip(tk, sums.tolist())), dict(zip(tk, counts.tolist())))


@dataclass(frozen=True)
class SpaefComponents:
    alpha: float
    beta: float
    gamma: float
    bins: int
    score: float
    n_cells: int
    disjoint: bool = False


def _union_vectors(a: HexMap, b: HexMap) -> tuple[np.ndarray, np.ndarray, bool]:
    if a.grid != b.grid:
        raise DataError("maps are on different hex grids")
    keys = sorted(set(a.cells) | set(b.cells))
    va = np.array([a.cells.get(k, 0.0) for k in keys])
    vb = np.array([b.cells.get(k, 0.0) for k in keys])
    return va, vb, not (set(a.cells) & set(b.cells))


def spaef_vectors(A, B, bins: int = DEFAULT_BINS) -> SpaefComponents:
    """SPAEF of two aligned value vectors (A is the reference)."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 1:
        raise DataError("SPAEF needs two equal-length 1-D vectors")
    if len(A) < 2:
        raise DataError("SPAEF needs at least 2 cells")
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    sa, sb = A.std(), B.std()
    if sa == 0 or sb == 0:
        raise DataError("SPAEF undefined for a map with zero variance")
    ma, mb = A.mean(), B.mean()
    if ma == 0 or mb == 0:
        raise DataError("SPAEF undefined for a map with zero mean (coefficient of variation)")
    alpha = float(np.corrcoef(A, B)[0, 1])
    beta = float((sa / ma) / (sb / mb))
    za, zb = (A - ma) / sa, (B - mb) / sb
    lo, hi = min(za.min(), zb.min()), max(za.max(), zb.max())
    edges = np.linspace(lo, hi, bins + 1)
    K, _ = np.histogram(za, edges)
    L, _ = np.histogram(zb, edges)
    gamma = float(np.minimum(K, L).sum() / K.sum())
    score = 1.0 - math.sqrt((alpha - 1) ** 2 + (beta - 1) ** 2 + (gamma - 1) ** 2)
    return SpaefComponents(alpha, beta, gamma, bins, score, len(A))


def spaef(a: HexMap, b: HexMap, bins: int = DEFAULT_BINS) -> SpaefComponents:
    """SPAEF over the union of both maps' cells, missing cells counted as 0."""
    va, vb, disjoint = _union_vectors(a, b)
    comp = spaef_vectors(va, vb, bins)
    return SpaefComponents(comp.alpha, comp.beta, comp.gamma, bins, comp.score, comp.n_cells, disjoint)


def spaef_matrix(maps: Mapping[str, HexMap], bins: int = DEFAULT_BINS) -> pd.DataFrame:
    """Square table of SPAEF scores (row = reference map); undefined pairs are NaN."""
    names = list(maps)
    M = np.full((len(names), len(names)), np.nan)
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            try:
                M[i, j] = spaef(maps[a], maps[b], bins).score
            except DataError:
                pass
    frame = pd.DataFrame(M, columns=names)
    frame.insert(0, "model", names)
    return frame


@dataclass(frozen=True)
class SensitivityCurve:
    deltas: np.ndarray
    mean_new_trips: np.ndarray
    model: str = "model"
    subgroup: str = "all"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "delta": self.deltas, "mean_new_trips": self.mean_new_trips,
            "model": self.model, "subgroup": self.subgroup,
        })


def _feature_column(X, feature: str) -> int:
    if isinstance(X, FeatureMatrix):
        if feature not in X.names:
            raise DataError(f"unknown feature {feature!r}")
        return X.index(feature)
    raise DataError("scenario analysis needs a FeatureMatrix with named columns")


def _predict(model, A):
    fn = model.predict if hasattr(model, "predict") else model
    return np.asarray(fn(A), dtype=float).ravel()


def new_trips(model, X: FeatureMatrix, feature: str, delta: float, scale=None) -> np.ndarray:
    """Per-person prediction change after raising ``feature`` by ``delta`` (times optional per-row ``scale``)."""
    j = _feature_column(X, feature)
    A = X.values
    base = _predict(model, A)
    if delta == 0 and scale is None:
        return np.zeros(len(A))
    shifted = A.copy()
    shifted[:, j] += delta * (1.0 if scale is None else np.asarray(scale, dtype=float))
    return _predict(model, shifted) - base


def sensitivity_curve(model, X: FeatureMatrix, feature: str = "access", deltas=DEFAULT_DELTAS,
                      name: str = "model", subgroup: str = "all", scale=None,
                      weights=None) -> SensitivityCurve:
    """Mean predicted new trips per person at each accessibility increment.

    ``scale`` is the per-zone hook: a per-row multiplier on the increment
    (default uniform).
    """
    d = np.asarray(deltas, dtype=float)
    if d.size == 0 or d[0] != 0 or np.any(np.diff(d) < 0):
        raise ConfigError("deltas must be sorted ascending and start at 0")
    j = _feature_column(X, feature)
    A = X.values
    base = _predict(model, A)
    out = np.zeros(len(d))
    for i, delta in enumerate(d):
        if delta == 0:
            continue
        shifted = A.copy()
        shifted[:, j] += delta * (1.0 if scale is None else np.asarray(scale, dtype=float))
        out[i] = np.average(_predict(model, shifted) - base, weights=weights)
    return SensitivityCurve(d, out, name, subgroup)


def new_trips_map(model, X: FeatureMatrix, coords, feature: str, delta: float, grid: HexGrid,
                  scale=None) -> HexMap:
    if coords is None:
        raise DataError("new-trips maps need home coordinates")
    coords = np.asarray(coords, dtype=float)
    return hex_bin(coords, new_trips(model, X, feature, delta, scale), grid)
