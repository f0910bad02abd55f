"""Survey tables: schema validation, one-hot encoding, stratified folds, subsetting.

The table format is plain CSV with a header row. A schema is a JSON document::

    {
      "columns": [
        {"name": "age", "kind": "numeric"},
        {"name": "gender", "kind": "binary"},
        {"name": "vehicles_per_adult", "kind": "nominal",
         "categories": ["0", "0-1", "1+"]}
      ],
      "target": "transit_trips",
      "weight": "expansion_factor",
      "coords": ["x", "y"]
    }

``columns`` lists the explanatory variables only; the target, weight and
coordinate columns are named separately and are always numeric.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
BINARY = "binary"
NOMINAL = "nominal"
ORDINAL = "ordinal"  # ordinal categories stored as numbers, treated as numeric
KINDS = (NUMERIC, BINARY, NOMINAL, ORDINAL)

TARGET_MAX = 25

_TRUE = {"1", "1.0", "true", "yes", "y", "t"}
_FALSE = {"0", "0.0", "false", "no", "n", "f"}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == NOMINAL:
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
            if len(self.categories) < 2:
                raise SchemaError(f"nominal column {self.name!r} needs at least 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"nominal column {self.name!r} has duplicate categories")

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == NOMINAL else 1


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    target: str
    weight: str | None = None
    coords: tuple[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.coords is not None:
            object.__setattr__(self, "coords", tuple(self.coords))
            if len(self.coords) != 2:
                raise SchemaError("coords must name exactly two columns (x, y)")
        names = self.all_names
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate column names: {sorted(dupes)}")

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def all_names(self) -> list[str]:
        names = self.feature_names + [self.target]
        if self.weight:
            names.append(self.weight)
        if self.coords:
            names.extend(self.coords)
        return names

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Schema":
        try:
            cols = tuple(
                Column(c["name"], c["kind"], tuple(c.get("categories", ())))
                for c in doc["columns"]
            )
            return cls(cols, doc["target"], doc.get("weight"), doc.get("coords"))
        except KeyError as exc:
            raise SchemaError(f"schema document missing field {exc}") from None

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind}
            if c.kind == NOMINAL:
                d["categories"] = list(c.categories)
            cols.append(d)
        return {
            "columns": cols,
            "target": self.target,
            "weight": self.weight,
            "coords": list(self.coords) if self.coords else None,
        }

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated survey records.

    ``frame`` holds one column per schema name; nominal values are strings,
    everything else float. ``imputed`` maps a numeric column to the boolean
    mask of rows whose missing value was replaced by the column median.
    """

    schema: Schema
    frame: pd.DataFrame
    imputed: Mapping[str, np.ndarray] = field(default_factory=dict)
    empty_warning: bool = False

    @property
    def n(self) -> int:
        return len(self.frame)

    def __len__(self) -> int:
        return self.n

    @property
    def y(self) -> np.ndarray:
        return self.frame[self.schema.target].to_numpy(dtype=float)

    @property
    def weights(self) -> np.ndarray | None:
        if not self.schema.weight:
            return None
        return self.frame[self.schema.weight].to_numpy(dtype=float)

    @property
    def coords(self) -> np.ndarray | None:
        if not self.schema.coords:
            return None
        return self.frame[list(self.schema.coords)].to_numpy(dtype=float)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        sub = self.frame.iloc[idx].reset_index(drop=True)
        imputed = {k: v[idx] for k, v in self.imputed.items()}
        return Dataset(self.schema, sub, imputed, empty_warning=len(sub) == 0)

    def with_frame(self, frame: pd.DataFrame) -> "Dataset":
        return validate_frame(frame, self.schema)

    def to_csv(self, path: str | Path) -> None:
        self.frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def _parse_binary(raw: pd.Series, name: str, errors: list[str]) -> np.ndarray:
    out = np.empty(len(raw))
    for i, v in enumerate(raw):
        s = str(v).strip().lower()
        if s in _TRUE:
            out[i] = 1.0
        elif s in _FALSE:
            out[i] = 0.0
        else:
            errors.append(f"row {i + 1}, column {name!r}: cannot parse {v!r} as binary")
    return out


def _parse_float(raw: pd.Series, name: str, errors: list[str], allow_missing: bool):
    vals = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    blank = raw.isna().to_numpy() | (raw.astype(str).str.strip() == "").to_numpy()
    bad = np.isnan(vals) & ~blank
    for i in np.flatnonzero(bad):
        errors.append(f"row {i + 1}, column {name!r}: cannot parse {raw.iloc[i]!r} as a number")
    if not allow_missing:
        for i in np.flatnonzero(blank):
            errors.append(f"row {i + 1}, column {name!r}: missing value")
    return vals, blank


def validate_frame(raw: pd.DataFrame, schema: Schema) -> Dataset:
    """Coerce and check a raw frame (any dtypes) against ``schema``.

    Row numbers in error messages count data rows from 1.
    """
    missing = [c for c in schema.all_names if c not in raw.columns]
    if missing:
        raise SchemaError(f"missing column(s) {missing}; header has {list(raw.columns)}")
    raw = raw.reset_index(drop=True)
    errors: list[str] = []
    out: dict[str, Any] = {}
    imputed: dict[str, np.ndarray] = {}

    for col in schema.columns:
        series = raw[col.name]
        if col.kind == NOMINAL:
            vals = series.astype(str).str.strip()
            allowed = set(col.categories)
            for i, v in enumerate(vals):
                if v not in allowed:
                    errors.append(
                        f"row {i + 1}, column {col.name!r}: category {v!r} not in {list(col.categories)}"
                    )
            out[col.name] = vals.to_numpy(dtype=object)
        elif col.kind == BINARY:
            out[col.name] = _parse_binary(series, col.name, errors)
        else:
            vals, blank = _parse_float(series, col.name, errors, allow_missing=True)
            if blank.any():
                present = vals[~blank]
                fill = float(np.median(present)) if present.size else 0.0
                vals = np.where(blank, fill, vals)
                imputed[col.name] = blank
                logger.info("imputed %d missing %r values with median %g", blank.sum(), col.name, fill)
            out[col.name] = vals

    y, _ = _parse_float(raw[schema.target], schema.target, errors, allow_missing=False)
    for i in np.flatnonzero(np.isfinite(y)):
        v = y[i]
        if v != np.floor(v):
            errors.append(f"row {i + 1}, column {schema.target!r}: target {v:g} is not an integer")
        elif v < 0 or v > TARGET_MAX:
            errors.append(f"row {i + 1}, column {schema.target!r}: target {v:g} outside [0, {TARGET_MAX}]")
    out[schema.target] = y

    if schema.weight:
        w, _ = _parse_float(raw[schema.weight], schema.weight, errors, allow_missing=False)
        for i in np.flatnonzero(np.isfinite(w) & (w <= 0)):
            errors.append(f"row {i + 1}, column {schema.weight!r}: weight must be positive")
        out[schema.weight] = w
    if schema.coords:
        for c in schema.coords:
            v, _ = _parse_float(raw[c], c, errors, allow_missing=False)
            out[c] = v

    if errors:
        shown = "\n  ".join(errors[:20])
        more = f"\n  ... and {len(errors) - 20} more" if len(errors) > 20 else ""
        raise DataError(f"{len(errors)} invalid cell(s):\n  {shown}{more}")

    frame = pd.DataFrame({name: out[name] for name in schema.all_names})
    return Dataset(schema, frame, imputed, empty_warning=len(frame) == 0)


def load_survey(path: str | Path, schema: Schema) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"survey file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    raw = raw.replace({"": np.nan, "NA": np.nan, "nan": np.nan})
    return validate_frame(raw, schema)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    names: tuple[str, ...]
    mapping: Mapping[str, tuple[int, int]]
    schema: Schema | None = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def groups(self) -> list[list[int]]:
        """Encoded column indices per original column (one-hot blocks stay together)."""
        return [list(range(a, b)) for a, b in self.mapping.values()]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def replace(self, values: np.ndarray) -> "FeatureMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.names):
            raise DataError(f"expected {len(self.names)} columns, got shape {values.shape}")
        return FeatureMatrix(values, self.names, self.mapping, self.schema)

    def take(self, idx) -> "FeatureMatrix":
        return self.replace(self.values[np.asarray(idx)])


def encode(dataset: Dataset) -> FeatureMatrix:
    """Design matrix: numeric passthrough, binary as 0/1, nominal one-hot in schema order."""
    schema = dataset.schema
    blocks, names, mapping = [], [], {}
    start = 0
    for col in schema.columns:
        vals = dataset.frame[col.name]
        if col.kind == NOMINAL:
            cats = np.asarray(vals, dtype=object).astype(str)
            unseen = sorted(set(cats) - set(col.categories))
            if unseen:
                raise DataError(f"column {col.name!r}: unseen categories {unseen}")
            block = np.stack([(cats == c).astype(float) for c in col.categories], axis=1)
            names.extend(f"{col.name}={c}" for c in col.categories)
        else:
            block = vals.to_numpy(dtype=float)[:, None]
            names.append(col.name)
        blocks.append(block.reshape(len(vals), -1))
        mapping[col.name] = (start, start + col.width)
        start += col.width
    values = np.hstack(blocks) if blocks else np.empty((dataset.n, 0))
    if np.isnan(values).any():
        raise DataError("missing values remain after encoding")
    return FeatureMatrix(values, tuple(names), mapping, schema)


def decode(fm: FeatureMatrix, values: np.ndarray | None = None) -> list[dict[str, Any]]:
    """Inverse of :func:`encode` for rows of ``values`` (default: the matrix itself)."""
    if fm.schema is None:
        raise DataError("decode needs a FeatureMatrix built from a schema")
    values = fm.values if values is None else np.atleast_2d(values)
    records = []
    for row in values:
        rec: dict[str, Any] = {}
        for col in fm.schema.columns:
            a, b = fm.mapping[col.name]
            if col.kind == NOMINAL:
                rec[col.name] = col.categories[int(np.argmax(row[a:b]))]
            else:
                rec[col.name] = float(row[a])
        records.append(rec)
    return records


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold: np.ndarray
    stratum: np.ndarray
    seed: int

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.fold == i
        return np.flatnonzero(~test), np.flatnonzero(test)

    def __iter__(self):
        for i in range(self.k):
            yield self.train_test(i)

    def to_csv(self, path: str | Path) -> None:
        pd.DataFrame({"row_id": np.arange(len(self.fold)), "fold": self.fold}).to_csv(
            path, index=False, lineterminator="\n"
        )


def stratified_kfold(dataset_or_y, k: int = 10, seed: int = 0) -> FoldAssignment:
    """Stratify on ``target > 0`` and deal each shuffled stratum round-robin.

    The deal continues across strata (the second stratum starts where the
    first left off), so both per-stratum and total fold sizes differ by at
    most one.
    """
    y = dataset_or_y.y if isinstance(dataset_or_y, Dataset) else np.asarray(dataset_or_y, dtype=float)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    stratum = (y > 0).astype(int)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=int)
    offset = 0
    for s in (1, 0):
        members = np.flatnonzero(stratum == s)
        if len(members) < k:
            raise DataError(f"stratum target{'>' if s else '='}0 has {len(members)} rows, fewer than k={k}")
        members = rng.permutation(members)
        fold[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return FoldAssignment(k, fold, stratum, seed)


def filter_subset(dataset: Dataset, conditions: Mapping[str, Any]) -> Dataset:
    """Keep rows matching every ``column == value`` (or ``column in [values]``) condition."""
    frame = dataset.frame
    mask = np.ones(len(frame), dtype=bool)
    for name, wanted in conditions.items():
        if name not in frame.columns:
            raise DataError(f"filter on unknown column {name!r}")
        col = frame[name]
        values = wanted if isinstance(wanted, (list, tuple, set)) else [wanted]
        if col.dtype == object:
            mask &= col.astype(str).isin([str(v) for v in values]).to_numpy()
        else:
            mask &= col.isin([float(v) for v in values]).to_numpy()
    out = dataset.take(np.flatnonzero(mask))
    if out.empty_warning:
        warnings.warn(f"filter {dict(conditions)} matched no rows", stacklevel=2)
    return out


def make_dataset(columns: Mapping[str, Sequence], schema: Schema) -> Dataset:
    return validate_frame(pd.DataFrame(dict(columns)), schema)
