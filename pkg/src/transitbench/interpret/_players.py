from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import BINARY, NOMINAL, FeatureMatrix
from ..errors import DataError


@dataclass(frozen=True)
class Player:
    """One explained feature: a single encoded column, or a whole one-hot block."""

    name: str
    columns: tuple[int, ...]
    kind: str = "numeric"
    categories: tuple[str, ...] = ()

    @property
    def categorical(self) -> bool:
        return self.kind in (NOMINAL, BINARY)

    def label(self, row: np.ndarray):
        """Human-readable value of this player in an encoded row."""
        if self.kind == NOMINAL:
            return self.categories[int(np.argmax(row[list(self.columns)]))]
        return float(row[self.columns[0]])


def players_of(X) -> list[Player]:
    if isinstance(X, FeatureMatrix) and X.schema is not None:
        out = []
        for col in X.schema.columns:
            a, b = X.mapping[col.name]
            out.append(Player(col.name, tuple(range(a, b)), col.kind, col.categories))
        return out
    A = values_of(X)
    names = X.names if isinstance(X, FeatureMatrix) else [f"x{i}" for i in range(A.shape[1])]
    return [Player(nm, (i,)) for i, nm in enumerate(names)]


def values_of(X) -> np.ndarray:
    A = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    if A.ndim != 2:
        raise DataError(f"expected a 2-D feature matrix, got shape {A.shape}")
    return A


def predictor(model):
    """Wrap a FittedModel or any callable as ``f(ndarray) -> ndarray``."""
    fn = model.predict if hasattr(model, "predict") else model
    return lambda A: np.asarray(fn(np.asarray(A, dtype=float)), dtype=float).ravel()


def find_player(players: list[Player], name: str) -> Player:
    for pl in players:
        if pl.name == name:
            return pl
    raise DataError(f"unknown feature {name!r}; available: {[p.name for p in players]}")
