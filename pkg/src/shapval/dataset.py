"""Tabular dataset loading, preprocessing, and stratified splitting.

Raw columns keep their original values (strings for categorical features)
so downstream consumers can display them; ``transform`` maps everything
into the model space: robust-scaled numerics and ordinal category codes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import RowParseError, SchemaError, UnknownCategoryError
from .seeding import substream

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# Values conventionally read as absent in numeric cells.
_MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}

IQR_FLOOR = 1e-9


@dataclass(frozen=True)
class FeatureSchema:
    """Name and kind of one feature column."""

    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class Dataset:
    """A named table: raw columns per the schema plus a binary label."""

    name: str
    schema: tuple[FeatureSchema, ...]
    columns: tuple[np.ndarray, ...]
    y: np.ndarray

    def __post_init__(self):
        if len(self.schema) != len(self.columns):
            raise SchemaError("schema and columns disagree on feature count")
        n = len(self.y)
        for fs, col in zip(self.schema, self.columns):
            if len(col) != n:
                raise SchemaError(f"feature {fs.name!r}: {len(col)} rows, label has {n}")
        bad = set(np.unique(self.y)) - {0, 1}
        if bad:
            raise SchemaError(f"label must be binary 0/1, found {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def feature_names(self) -> list[str]:
        return [fs.name for fs in self.schema]

    def take(self, idx: np.ndarray) -> "Dataset":
        """Row subset as a new Dataset."""
        cols = tuple(col[idx] for col in self.columns)
        return Dataset(self.name, self.schema, cols, self.y[idx])


def _parse_numeric(token: str, row: int, name: str) -> float:
    t = token.strip()
    if t.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(t)
    except ValueError:
        raise RowParseError(row, f"feature {name!r}: cannot parse {token!r} as numeric") from None


def infer_schema(header: list[str], rows: list[list[str]], label_column: str) -> tuple[FeatureSchema, ...]:
    """Guess feature kinds: numeric if every non-missing cell parses as float."""
    out = []
    for j, name in enumerate(header):
        if name == label_column:
            continue
        numeric = True
        for r in rows:
            t = r[j].strip()
            if t.lower() in _MISSING_TOKENS:
                continue
            try:
                float(t)
            except ValueError:
                numeric = False
                break
        out.append(FeatureSchema(name, NUMERIC if numeric else CATEGORICAL))
    return tuple(out)


def load_csv(path, label_column: str, schema: tuple[FeatureSchema, ...] | None = None,
             name: str | None = None) -> Dataset:
    """Load a CSV with header into a Dataset.

    The label column must contain 0/1. When ``schema`` is omitted the
    feature kinds are inferred from the cells.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if label_column not in header:
        raise SchemaError(f"label column {label_column!r} not in header {header}")
    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise RowParseError(i, f"expected {width} cells, got {len(r)}")

    if schema is None:
        schema = infer_schema(header, rows, label_column)
    declared = {fs.name for fs in schema}
    missing = declared - set(header)
    if missing:
        raise SchemaError(f"schema names not in header: {sorted(missing)}")

    col_of = {h: j for j, h in enumerate(header)}
    y = np.empty(len(rows), dtype=np.int8)
    jy = col_of[label_column]
    for i, r in enumerate(rows):
        t = r[jy].strip()
        if t not in ("0", "1"):
            raise RowParseError(i, f"label must be 0 or 1, got {t!r}")
        y[i] = int(t)

    columns = []
    for fs in schema:
        j = col_of[fs.name]
        if fs.kind == NUMERIC:
            col = np.empty(len(rows), dtype=np.float64)
            for i, r in enumerate(rows):
                col[i] = _parse_numeric(r[j], i, fs.name)
        else:
            col = np.array([r[j].strip() for r in rows], dtype=object)
        columns.append(col)
    return Dataset(name or str(path), schema, tuple(columns), y)


@dataclass
class SentinelReport:
    """What sentinel cleaning did: dropped columns and imputation counts."""

    dropped: list[str]
    imputed: dict[str, int]


def clean_sentinels(ds: Dataset, sentinels: tuple[float, ...] = (-7.0, -8.0, -9.0),
                    max_missing_frac: float = 0.5) -> tuple[Dataset, SentinelReport]:
    """Treat sentinel codes in numeric columns as missing.

    Columns with more than ``max_missing_frac`` missing are dropped; the
    rest are median-imputed from the observed values.
    """
    keep_schema, keep_cols, dropped, imputed = [], [], [], {}
    sset = set(sentinels)
    for fs, col in zip(ds.schema, ds.columns):
        if fs.kind != NUMERIC:
            keep_schema.append(fs)
            keep_cols.append(col)
            continue
        col = col.copy()
        mask = np.isnan(col)
        for s in sset:
            mask |= col == s
        frac = mask.mean()
        if frac > max_missing_frac:
            dropped.append(fs.name)
            continue
        if mask.any():
            if mask.all():
                raise SchemaError(f"feature {fs.name!r}: all values missing")
            med = float(np.median(col[~mask]))
            col[mask] = med
            imputed[fs.name] = int(mask.sum())
        keep_schema.append(fs)
        keep_cols.append(col)
    out = Dataset(ds.name, tuple(keep_schema), tuple(keep_cols), ds.y)
    return out, SentinelReport(dropped, imputed)


@dataclass
class PreprocessState:
    """Fitted per-feature transform parameters.

    Numeric features carry (median, iqr); categorical features carry their
    level list in first-appearance order, the code being the list index.
    """

    schema: tuple[FeatureSchema, ...]
    medians: dict[str, float]
    iqrs: dict[str, float]
    levels: dict[str, tuple[str, ...]]

    def to_json(self) -> str:
        payload = {
            "schema": [[fs.name, fs.kind] for fs in self.schema],
            "medians": self.medians,
            "iqrs": self.iqrs,
            "levels": {k: list(v) for k, v in self.levels.items()},
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessState":
        obj = json.loads(text)
        schema = tuple(FeatureSchema(n, k) for n, k in obj["schema"])
        return cls(schema, obj["medians"], obj["iqrs"],
                   {k: tuple(v) for k, v in obj["levels"].items()})


def fit_preprocess(ds: Dataset) -> PreprocessState:
    """Fit robust scaling for numerics and ordinal codes for categoricals.

    Fit on the training split only; the state is then applied everywhere.
    """
    medians, iqrs, levels = {}, {}, {}
    for fs, col in zip(ds.schema, ds.columns):
        if fs.kind == NUMERIC:
            if np.isnan(col.astype(np.float64)).any():
                raise SchemaError(f"feature {fs.name!r}: missing values survive into fit")
            medians[fs.name] = float(np.median(col))
            q75, q25 = np.percentile(col, [75.0, 25.0])
            iqrs[fs.name] = max(float(q75 - q25), IQR_FLOOR)
        else:
            seen: dict[str, None] = {}
            for v in col:
                if v not in seen:
                    seen[v] = None
            levels[fs.name] = tuple(seen)
    return PreprocessState(ds.schema, medians, iqrs, levels)


def transform(ds: Dataset, state: PreprocessState) -> np.ndarray:
    """Map raw columns into the model space.

    Numerics become ``tanh((v - median) / iqr)``; categoricals become their
    fitted ordinal codes. Unseen categories raise UnknownCategoryError.
    """
    if tuple(fs.name for fs in ds.schema) != tuple(fs.name for fs in state.schema):
        raise SchemaError("dataset schema does not match preprocess state")
    X = np.empty((ds.n, ds.d), dtype=np.float64)
    for j, (fs, col) in enumerate(zip(ds.schema, ds.columns)):
        if fs.kind == NUMERIC:
            X[:, j] = np.tanh((col - state.medians[fs.name]) / state.iqrs[fs.name])
        else:
            code = {lvl: float(i) for i, lvl in enumerate(state.levels[fs.name])}
            try:
                X[:, j] = [code[v] for v in col]
            except KeyError as e:
                raise UnknownCategoryError(
                    f"feature {fs.name!r}: unseen category {e.args[0]!r}") from None
    return X


def decode_value(state: PreprocessState, feature: str, value) -> str:
    """Render one raw value for display; categoricals by level label."""
    for fs in state.schema:
        if fs.name == feature:
            if fs.kind == CATEGORICAL:
                return str(value)
            v = float(value)
            return f"{int(v)}" if v == int(v) else f"{v:.4g}"
    raise SchemaError(f"unknown feature {feature!r}")


@dataclass
class Splits:
    """Row index arrays for the train/validation/test partition."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k).tolist() for k in ("train", "val", "test")})

    @classmethod
    def from_json(cls, text: str) -> "Splits":
        obj = json.loads(text)
        return cls(*(np.asarray(obj[k], dtype=np.int64) for k in ("train", "val", "test")))


def _largest_remainder(counts: np.ndarray, k: int) -> np.ndarray:
    """Apportion k slots across classes proportionally to counts."""
    quota = k * counts / counts.sum()
    base = np.floor(quota).astype(np.int64)
    rem = k - base.sum()
    if rem > 0:
        # Ties in the fractional part resolve toward the larger class.
        order = np.lexsort((-counts, -(quota - base)))
        base[order[:rem]] += 1
    return base


def stratified_split(y: np.ndarray, seed: int, cap: int = 200) -> Splits:
    """Label-stratified split with val and test of size min(floor(n/10), cap).

    Per-class allocations use largest-remainder rounding so each split
    matches the overall prevalence as closely as integers allow.
    """
    y = np.asarray(y)
    n = len(y)
    k = min(n // 10, cap)
    if k < 1:
        raise SchemaError(f"dataset too small to split: n={n}")
    classes = np.unique(y)
    counts = np.array([(y == c).sum() for c in classes])
    val_per = _largest_remainder(counts, k)
    test_per = _largest_remainder(counts, k)
    if np.any(counts - val_per - test_per < 1):
        raise SchemaError("a class would have no training rows after the split")

    val_parts, test_parts, train_parts = [], [], []
    for c, nv, nt in zip(classes, val_per, test_per):
        idx = np.flatnonzero(y == c)
        rng = substream(seed, "split", int(c))
        idx = rng.permutation(idx)
        val_parts.append(idx[:nv])
        test_parts.append(idx[nv:nv + nt])
        train_parts.append(idx[nv + nt:])
    return Splits(
        train=np.sort(np.concatenate(train_parts)),
        val=np.sort(np.concatenate(val_parts)),
        test=np.sort(np.concatenate(test_parts)),
    )
