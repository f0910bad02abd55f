"""Common fit/predict contract, spec parsing, JSON persistence and external predictions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import pandas as pd

from ..dataset import FeatureMatrix
from ..errors import ConfigError, DataError

FAMILIES = ("ols", "zinb", "hurdle", "cart", "forest", "boost", "mlp")
STATISTICAL = ("ols", "zinb", "hurdle")
STOCHASTIC = ("forest", "boost", "mlp")

DEFAULTS: dict[str, dict[str, Any]] = {
    "ols": {"ridge": 0.0},
    "zinb": {"max_iter": 200, "tol": 1e-8},
    "hurdle": {"max_iter": 500, "tol": 1e-8},
    "cart": {"max_depth": 8, "min_leaf": 10},
    "forest": {"n_trees": 500, "mtry": None, "min_leaf": 5, "max_depth": None, "bootstrap": True},
    "boost": {"n_rounds": 300, "learning_rate": 0.1, "max_depth": 4, "min_leaf": 1},
    "mlp": {"hidden_sizes": [32], "epochs": 200, "step_size": 1e-3, "batch": 64},
}


@dataclass(frozen=True)
class RegressorSpec:
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int | None = None
    name: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        unknown = set(self.params) - set(DEFAULTS[self.family])
        if unknown:
            raise ConfigError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")
        if self.family in STOCHASTIC and self.seed is None:
            raise ConfigError(f"{self.family} needs a seed")

    @property
    def label(self) -> str:
        return self.name or self.family

    def resolved(self) -> dict[str, Any]:
        out = dict(DEFAULTS[self.family])
        out.update(self.params)
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], default_seed: int | None = None) -> "RegressorSpec":
        doc = dict(doc)
        family = doc.pop("family", None)
        if family is None:
            raise ConfigError(f"model spec without family: {doc}")
        seed = doc.pop("seed", default_seed)
        name = doc.pop("name", None)
        params = doc.pop("params", {})
        params.update(doc)
        return cls(family, params, seed, name)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A trained regressor. ``params`` holds numpy arrays / nested dicts of them."""

    family: str
    params: Mapping[str, Any]
    feature_names: tuple[str, ...]
    meta: Mapping[str, Any] = field(default_factory=dict)
    seed: int | None = None

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def __call__(self, X) -> np.ndarray:
        return predict(self, X)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "feature_names": list(self.feature_names),
            "seed": self.seed,
            "params": _jsonable(self.params),
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FittedModel":
        return cls(
            doc["family"],
            _arrays(doc["params"]),
            tuple(doc["feature_names"]),
            doc.get("meta", {}),
            doc.get("seed"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FittedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _arrays(obj):
    if isinstance(obj, Mapping):
        if "__array__" in obj:
            return np.asarray(obj["__array__"], dtype=obj.get("dtype", "float64"))
        return {k: _arrays(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_arrays(v) for v in obj]
    return obj


_PREDICTORS: dict[str, Callable[[FittedModel, np.ndarray], np.ndarray]] = {}


def register_predictor(family: str):
    def deco(fn):
        _PREDICTORS[family] = fn
        return fn
    return deco


def as_array(X, feature_names: tuple[str, ...] | None = None) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        if feature_names is not None and tuple(X.names) != tuple(feature_names):
            raise DataError(
                f"feature mismatch: model fitted on {list(feature_names)}, got {list(X.names)}"
            )
        return X.values
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if feature_names is not None and arr.shape[1] != len(feature_names):
        raise DataError(f"expected {len(feature_names)} feature columns, got {arr.shape[1]}")
    return arr


def reference_columns(X) -> np.ndarray:
    """Mask of columns kept by intercept models: the first level of each one-hot block is dropped."""
    arr = as_array(X)
    keep = np.ones(arr.shape[1], dtype=bool)
    schema = getattr(X, "schema", None)
    if schema is not None:
        for col in schema.columns:
            if col.kind == "nominal":
                keep[X.mapping[col.name][0]] = False
    return keep


def predict(model: FittedModel, X) -> np.ndarray:
    arr = as_array(X, model.feature_names)
    yhat = _PREDICTORS[model.family](model, arr)
    if not np.all(np.isfinite(yhat)):
        raise DataError(f"{model.family} produced non-finite predictions")
    return yhat


def feature_names_of(X, n_cols: int) -> tuple[str, ...]:
    if isinstance(X, FeatureMatrix):
        return tuple(X.names)
    return tuple(f"x{i}" for i in range(n_cols))


def load_external_predictions(path: str | Path, row_ids=None) -> np.ndarray:
    """Read a ``row_id,yhat`` CSV and align it to ``row_ids`` (default ``0..max``)."""
    frame = pd.read_csv(path)
    missing_cols = {"row_id", "yhat"} - set(frame.columns)
    if missing_cols:
        raise DataError(f"{path}: missing column(s) {sorted(missing_cols)}")
    ids = frame["row_id"].to_numpy()
    dup = pd.Series(ids)[pd.Series(ids).duplicated()].unique()
    if len(dup):
        raise DataError(f"{path}: duplicate row id(s) {list(dup)}")
    lookup = dict(zip(ids.tolist(), frame["yhat"].to_numpy(dtype=float)))
    wanted = np.arange(int(ids.max()) + 1) if row_ids is None else np.asarray(row_ids)
    absent = [int(i) for i in wanted if int(i) not in lookup]
    if absent:
        raise DataError(f"{path}: missing row id(s) {absent[:10]}")
    yhat = np.array([lookup[int(i)] for i in wanted])
    if not np.all(np.isfinite(yhat)):
        raise DataError(f"{path}: non-finite predictions")
    return yhat


def save_external_predictions(path: str | Path, row_ids, yhat) -> None:
    pd.DataFrame({"row_id": np.asarray(row_ids), "yhat": np.asarray(yhat)}).to_csv(
        path, index=False, float_format="%.12g", lineterminator="\n"
    )
