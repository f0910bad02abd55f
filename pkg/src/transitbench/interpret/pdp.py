"""Partial dependence and individual conditional expectation curves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..dataset import NOMINAL
from ..errors import DataError
from ._players import Player, find_player, players_of, predictor, values_of

DEFAULT_GRID = 20


@dataclass(frozen=True)
class GridSpec:
    """Values to sweep for one feature. Nominal features sweep category labels."""

    feature: str
    values: tuple

    @property
    def size(self) -> int:
        return len(self.values)


def make_grid(X, feature: str, size: int = DEFAULT_GRID) -> GridSpec:
    """Quantile grid for numeric features; every level for categorical ones."""
    pl = find_player(players_of(X), feature)
    A = values_of(X)
    if pl.kind == NOMINAL:
        return GridSpec(feature, pl.categories)
    col = A[:, pl.columns[0]]
    uniq = np.unique(col)
    if len(uniq) <= size:
        return GridSpec(feature, tuple(uniq.tolist()))
    return GridSpec(feature, tuple(np.unique(np.quantile(col, np.linspace(0, 1, size))).tolist()))


def _setter(pl: Player, A: np.ndarray, value) -> np.ndarray:
    out = A.copy()
    if pl.kind == NOMINAL:
        if value not in pl.categories:
            raise DataError(f"{pl.name}: grid value {value!r} is not a category")
        out[:, list(pl.columns)] = 0.0
        out[:, pl.columns[pl.categories.index(value)]] = 1.0
    else:
        out[:, pl.columns[0]] = float(value)
    return out


def _check_range(pl: Player, A: np.ndarray, grid: GridSpec):
    if pl.kind == NOMINAL:
        return
    col = A[:, pl.columns[0]]
    lo, hi = col.min(), col.max()
    vals = np.asarray(grid.values, dtype=float)
    if vals.min() < lo or vals.max() > hi:
        raise DataError(f"{pl.name}: grid [{vals.min():g}, {vals.max():g}] outside observed [{lo:g}, {hi:g}]")


def _sweep(model, X, grid: GridSpec, rows: np.ndarray) -> np.ndarray:
    """Predictions (rows x grid) with the feature overwritten by each grid value."""
    pl = find_player(players_of(X), grid.feature)
    A = values_of(X)
    _check_range(pl, A, grid)
    f = predictor(model)
    sub = A[rows]
    return np.column_stack([f(_setter(pl, sub, v)) for v in grid.values])


@dataclass(frozen=True)
class PDPCurve:
    feature: str
    grid: tuple
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": self.feature, "grid_value": list(self.grid), "pdp": self.values})


@dataclass(frozen=True)
class ICEBundle:
    feature: str
    grid: tuple
    row_ids: np.ndarray
    curves: np.ndarray  # rows x grid

    @property
    def mean(self) -> np.ndarray:
        return self.curves.mean(axis=0)

    def to_frame(self) -> pd.DataFrame:
        g = len(self.grid)
        return pd.DataFrame({
            "feature": self.feature,
            "row_id": np.repeat(self.row_ids, g),
            "grid_value": list(self.grid) * len(self.row_ids),
            "yhat": self.curves.ravel(),
        })


def pdp(model, X, grid: GridSpec) -> PDPCurve:
    rows = np.arange(len(values_of(X)))
    return PDPCurve(grid.feature, grid.values, _sweep(model, X, grid, rows).mean(axis=0))


def ice(model, X, grid: GridSpec, sample=None, seed: int = 0) -> ICEBundle:
    """ICE curves for ``sample``: None (all rows), a row count drawn with ``seed``, or explicit row ids."""
    n = len(values_of(X))
    if sample is None:
        rows = np.arange(n)
    elif np.isscalar(sample):
        m = int(sample)
        if m < 1:
            raise DataError("ICE sample is empty")
        rows = np.sort(np.random.default_rng(seed).choice(n, size=min(m, n), replace=False))
    else:
        rows = np.asarray(sample, dtype=int)
        if rows.size == 0:
            raise DataError("ICE sample is empty")
        if rows.min() < 0 or rows.max() >= n:
            raise DataError("ICE sample row ids out of range")
    return ICEBundle(grid.feature, grid.values, rows, _sweep(model, X, grid, rows))
