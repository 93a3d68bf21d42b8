"""CSV ingestion, sentinel cleaning, preprocessing, and splits."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapval.dataset import (CATEGORICAL, IQR_FLOOR, NUMERIC, Dataset, FeatureSchema,
                             PreprocessState, Splits, clean_sentinels, fit_preprocess,
                             infer_schema, load_csv, stratified_split, transform)
from shapval.errors import RowParseError, SchemaError, UnknownCategoryError


def write_csv(path, text):
    path.write_text(text)
    return str(path)


# ---- loading ----------------------------------------------------------------


def test_single_numeric_row(tmp_path):
    p = write_csv(tmp_path / "one.csv", "x,label\n1.5,1\n")
    ds = load_csv(p, "label")
    assert ds.d == 1 and ds.n == 1
    assert ds.columns[0][0] == 1.5
    assert ds.y.tolist() == [1]
    assert ds.schema[0].kind == NUMERIC


def test_schema_inference_mixed(tmp_path):
    p = write_csv(tmp_path / "m.csv", "a,b,label\n1,red,0\n2.5,blue,1\n")
    ds = load_csv(p, "label")
    kinds = {fs.name: fs.kind for fs in ds.schema}
    assert kinds == {"a": NUMERIC, "b": CATEGORICAL}


def test_missing_label_column(tmp_path):
    p = write_csv(tmp_path / "m.csv", "a,b\n1,2\n")
    with pytest.raises(SchemaError):
        load_csv(p, "label")


def test_ragged_row_rejected(tmp_path):
    p = write_csv(tmp_path / "m.csv", "a,label\n1,0\n2\n")
    with pytest.raises(RowParseError):
        load_csv(p, "label")


def test_non_binary_label_rejected(tmp_path):
    p = write_csv(tmp_path / "m.csv", "a,label\n1,2\n")
    with pytest.raises(RowParseError):
        load_csv(p, "label")


def test_empty_file_rejected(tmp_path):
    p = write_csv(tmp_path / "m.csv", "")
    with pytest.raises(SchemaError):
        load_csv(p, "label")


# ---- sentinel cleaning -------------------------------------------------------


def test_sentinels_imputed_to_median():
    ds = Dataset("t", (FeatureSchema("a", NUMERIC),),
                 (np.array([1.0, 2.0, 3.0, -9.0]),), np.array([0, 1, 0, 1]))
    out, report = clean_sentinels(ds)
    assert out.columns[0][3] == 2.0
    assert report.imputed == {"a": 1}
    assert report.dropped == []


def test_mostly_missing_column_dropped():
    ds = Dataset("t", (FeatureSchema("a", NUMERIC), FeatureSchema("b", NUMERIC)),
                 (np.array([-9.0, -8.0, -7.0, 4.0]), np.arange(4.0)),
                 np.array([0, 1, 0, 1]))
    out, report = clean_sentinels(ds)
    assert report.dropped == ["a"]
    assert out.d == 1 and out.feature_names == ["b"]


def test_categorical_columns_untouched():
    ds = Dataset("t", (FeatureSchema("c", CATEGORICAL),),
                 (np.array(["-9", "x"], dtype=object),), np.array([0, 1]))
    out, report = clean_sentinels(ds)
    assert out.columns[0].tolist() == ["-9", "x"]
    assert not report.imputed and not report.dropped


# ---- preprocessing ------------------------------------------------------------


def make_numeric_ds(values):
    return Dataset("t", (FeatureSchema("v", NUMERIC),),
                   (np.asarray(values, dtype=np.float64),),
                   np.zeros(len(values), dtype=np.int8))


def test_fit_median_iqr():
    state = fit_preprocess(make_numeric_ds([1, 2, 3, 4, 5]))
    assert state.medians["v"] == 3.0
    assert state.iqrs["v"] == 2.0


def test_fit_constant_column_floors_iqr():
    state = fit_preprocess(make_numeric_ds([7, 7, 7]))
    assert state.medians["v"] == 7.0
    assert state.iqrs["v"] == IQR_FLOOR


def test_fit_levels_in_first_appearance_order():
    ds = Dataset("t", (FeatureSchema("c", CATEGORICAL),),
                 (np.array(["A", "B", "C", "B"], dtype=object),),
                 np.zeros(4, dtype=np.int8))
    state = fit_preprocess(ds)
    assert state.levels["c"] == ("A", "B", "C")
    X = transform(ds, state)
    assert X[:, 0].tolist() == [0.0, 1.0, 2.0, 1.0]


def test_transform_centering_and_unit():
    ds = make_numeric_ds([1, 2, 3, 4, 5])
    state = fit_preprocess(ds)
    X = transform(make_numeric_ds([3.0, 5.0]), state)
    assert X[0, 0] == 0.0
    assert math.isclose(X[1, 0], math.tanh(1.0), rel_tol=1e-12)


@given(st.floats(min_value=-1e12, max_value=1e12, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_transform_output_bounded(v):
    state = fit_preprocess(make_numeric_ds([1, 2, 3, 4, 5]))
    X = transform(make_numeric_ds([v]), state)
    # Mathematically open; float64 tanh saturates to exactly +-1 far out.
    assert -1.0 <= X[0, 0] <= 1.0
    if abs(v - 3.0) / 2.0 < 18.0:
        assert -1.0 < X[0, 0] < 1.0


def test_unseen_category_rejected():
    train = Dataset("t", (FeatureSchema("c", CATEGORICAL),),
                    (np.array(["A", "B"], dtype=object),), np.zeros(2, dtype=np.int8))
    state = fit_preprocess(train)
    other = Dataset("t", (FeatureSchema("c", CATEGORICAL),),
                    (np.array(["Z"], dtype=object),), np.zeros(1, dtype=np.int8))
    with pytest.raises(UnknownCategoryError):
        transform(other, state)


def test_preprocess_state_round_trip(maternal):
    restored = PreprocessState.from_json(maternal.state.to_json())
    assert restored.to_json() == maternal.state.to_json()
    assert np.array_equal(transform(maternal.ds, restored), maternal.X)


# ---- splits -------------------------------------------------------------------


def test_split_sizes_credit(credit):
    s = credit.splits
    assert (len(s.train), len(s.val), len(s.test)) == (800, 100, 100)


def test_split_sizes_maternal(maternal):
    s = maternal.splits
    assert (len(s.train), len(s.val), len(s.test)) == (812, 101, 101)


def test_split_deterministic(maternal):
    again = stratified_split(maternal.ds.y, 0)
    for part in ("train", "val", "test"):
        assert np.array_equal(getattr(again, part), getattr(maternal.splits, part))


def test_split_partition_disjoint(maternal):
    s = maternal.splits
    all_idx = np.concatenate([s.train, s.val, s.test])
    assert len(np.unique(all_idx)) == maternal.ds.n


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_split_prevalence_close(seed):
    rng = np.random.default_rng(seed)
    y = (rng.random(400) < 0.3).astype(np.int8)
    if y.sum() < 3 or y.sum() > 397:
        return
    s = stratified_split(y, seed)
    prev = y.mean()
    for part in (s.val, s.test):
        # Largest-remainder apportionment keeps each split within one count.
        assert abs(y[part].sum() - prev * len(part)) <= 1.0


def test_split_too_small_rejected():
    with pytest.raises(SchemaError):
        stratified_split(np.array([0, 1, 1]), 0)


def test_splits_round_trip():
    s = Splits(np.array([0, 1]), np.array([2]), np.array([3]))
    r = Splits.from_json(s.to_json())
    for part in ("train", "val", "test"):
        assert np.array_equal(getattr(r, part), getattr(s, part))


# ---- bundled demo data ---------------------------------------------------------


def test_demo_credit_shape(credit):
    ds = credit.ds
    assert ds.d == 20
    assert sum(fs.kind == CATEGORICAL for fs in ds.schema) == 11
    assert ds.n == 1000
    assert abs(ds.y.mean() - 0.300) < 1e-9


def test_demo_maternal_shape(maternal):
    ds = maternal.ds
    assert ds.d == 6
    assert all(fs.kind == NUMERIC for fs in ds.schema)
    assert ds.n == 1014
