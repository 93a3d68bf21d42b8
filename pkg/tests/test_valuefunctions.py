"""Backgrounds, coalition values, and counterfactual search."""

from __future__ import annotations

import math

import numpy as np
import pytest

from shapval.errors import (CounterfactualSearchError, EmptyFilterError, SchemaError)
from shapval.models import LogisticModel, score_one
from shapval.valuefunctions import (VARIANTS, BackgroundSet, ValueFunctionSpec,
                                    build_background, generate_counterfactual, impute,
                                    resolve_output_filter, value, values_for_masks)


class LinearModel:
    """Raw linear scorer for closed-form checks."""

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)

    def score(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w + self.b


def rng_train(d=4, n=60, seed=0):
    return np.random.default_rng(seed).normal(size=(n, d))


# ---- spec validation -----------------------------------------------------------


def test_unknown_variant_rejected():
    with pytest.raises(SchemaError):
        ValueFunctionSpec("zero_fixed")


def test_foreign_parameter_rejected():
    with pytest.raises(SchemaError):
        ValueFunctionSpec("marginal", threshold=0.5)
    with pytest.raises(SchemaError):
        ValueFunctionSpec("fixed_zero", kernel_bandwidth=1.0)


def test_fingerprint_separates_specs():
    a = ValueFunctionSpec("marginal", seed=0)
    b = ValueFunctionSpec("marginal", seed=1)
    assert a.fingerprint() == ValueFunctionSpec("marginal", seed=0).fingerprint()
    assert a.fingerprint() != b.fingerprint()


def test_all_eight_variants_listed():
    assert VARIANTS == ("fixed_zero", "fixed_mean", "uniform", "marginal",
                       "joint_marginal", "conditional", "counterfactual",
                       "filtered_conditional")


# ---- backgrounds ----------------------------------------------------------------


def test_fixed_mean_is_column_mean():
    train = np.array([[1.0], [3.0], [5.0]])
    bg = build_background(train, ValueFunctionSpec("fixed_mean"))
    assert bg.rows.shape == (1, 1)
    assert bg.rows[0, 0] == 3.0


def test_fixed_zero_is_origin():
    bg = build_background(rng_train(), ValueFunctionSpec("fixed_zero"))
    assert np.all(bg.rows == 0.0)


def test_explicit_baseline_row():
    bg = build_background(rng_train(d=2), ValueFunctionSpec("fixed_zero", baseline=(1.0, 2.0)))
    assert bg.rows.tolist() == [[1.0, 2.0]]


def test_uniform_rows_within_train_envelope():
    train = rng_train(d=3, n=80)
    bg = build_background(train, ValueFunctionSpec("uniform", background_size=50))
    assert np.all(bg.rows >= train.min(axis=0) - 1e-12)
    assert np.all(bg.rows <= train.max(axis=0) + 1e-12)


def test_uniform_categorical_coords_use_codes():
    train = rng_train(d=2, n=50)
    train[:, 1] = np.random.default_rng(1).integers(0, 3, 50)
    cat = np.array([False, True])
    bg = build_background(train, ValueFunctionSpec("uniform", background_size=40),
                          cat_mask=cat)
    assert set(np.unique(bg.rows[:, 1])) <= {0.0, 1.0, 2.0}


def test_marginal_columns_resampled_independently():
    train = rng_train(d=2, n=100, seed=3)
    bg = build_background(train, ValueFunctionSpec("marginal", background_size=60))
    # Every cell exists in its own column; rows need not exist jointly.
    for j in range(2):
        assert np.isin(bg.rows[:, j], train[:, j]).all()


def test_joint_marginal_rows_are_train_rows():
    train = rng_train(d=3, n=40, seed=4)
    bg = build_background(train, ValueFunctionSpec("joint_marginal", background_size=10))
    present = {tuple(r) for r in train}
    assert all(tuple(r) in present for r in bg.rows)


def test_vacuous_filter_admits_all_rows(maternal):
    spec = ValueFunctionSpec("filtered_conditional", output_filter=(0.0, 1.0),
                             background_size=10_000)
    bg = build_background(maternal.train_X, spec, model=maternal.model)
    assert np.array_equal(bg.rows, maternal.train_X)


def test_default_filter_is_far_side():
    spec = ValueFunctionSpec("filtered_conditional", threshold=0.4)
    assert resolve_output_filter(spec, 0.9) == (0.0, 0.4)
    assert resolve_output_filter(spec, 0.1) == (0.4, 1.0)


def test_empty_filter_band_errors(maternal):
    spec = ValueFunctionSpec("filtered_conditional", output_filter=(0.999999, 1.0))
    with pytest.raises(EmptyFilterError):
        build_background(maternal.train_X, spec, model=maternal.model)


def test_counterfactual_rows_cross_threshold(maternal):
    x = maternal.X[maternal.test[0]]
    fx = score_one(maternal.model, x)
    spec = ValueFunctionSpec("counterfactual", background_size=6, search_budget=3000)
    bg = build_background(maternal.train_X, spec, model=maternal.model, x=x)
    scores = maternal.model.score(bg.rows)
    assert np.all((scores >= 0.5) != (fx >= 0.5))


def test_background_determinism(maternal):
    x = maternal.X[maternal.test[1]]
    for name in ("uniform", "marginal", "joint_marginal", "conditional",
                 "counterfactual", "filtered_conditional"):
        kw = {"background_size": 8}
        if name == "counterfactual":
            kw["search_budget"] = 3000
        a = build_background(maternal.train_X, ValueFunctionSpec(name, **kw),
                             model=maternal.model, x=x)
        b = build_background(maternal.train_X, ValueFunctionSpec(name, **kw),
                             model=maternal.model, x=x)
        assert np.array_equal(a.rows, b.rows), name


def test_base_value_is_mean_row_score(maternal):
    bg = build_background(maternal.train_X, ValueFunctionSpec("marginal"),
                          model=maternal.model)
    assert math.isclose(bg.base_value, maternal.model.score(bg.rows).mean(), rel_tol=1e-12)


# ---- imputation and values -------------------------------------------------------


def test_impute_full_coalition_returns_x():
    x = np.array([7.0, 9.0])
    rows = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = impute(x, np.array([True, True]), rows)
    assert np.all(out == x)


def test_impute_empty_coalition_returns_rows():
    x = np.array([7.0, 9.0])
    rows = np.array([[1.0, 2.0]])
    out = impute(x, np.array([False, False]), rows)
    assert np.array_equal(out, rows)


def test_impute_splices():
    out = impute(np.array([7.0, 9.0]), np.array([True, False]), np.array([[1.0, 2.0]]))
    assert out.tolist() == [[7.0, 2.0]]


def test_value_full_mask_is_prediction(maternal):
    x = maternal.X[maternal.test[2]]
    bg = build_background(maternal.train_X, ValueFunctionSpec("marginal"),
                          model=maternal.model)
    v = value(x, np.ones(len(x), dtype=bool), bg, maternal.model)
    assert math.isclose(v, score_one(maternal.model, x), rel_tol=1e-12)


def test_value_empty_mask_fixed_zero_is_origin_score(maternal):
    d = maternal.X.shape[1]
    bg = build_background(maternal.train_X, ValueFunctionSpec("fixed_zero"),
                          model=maternal.model)
    v = value(maternal.X[maternal.test[0]], np.zeros(d, dtype=bool), bg, maternal.model)
    assert math.isclose(v, score_one(maternal.model, np.zeros(d)), rel_tol=1e-12)


def test_marginal_value_linear_closed_form():
    train = rng_train(d=2, n=400, seed=7)
    model = LinearModel([1.0, 1.0])
    bg = build_background(train, ValueFunctionSpec("marginal", background_size=200),
                          model=model)
    x = np.array([2.0, -1.0])
    v = value(x, np.array([True, False]), bg, model)
    mu = train[:, 1].mean()
    se = train[:, 1].std() / math.sqrt(len(bg.rows))
    assert abs(v - (x[0] + mu)) <= 3 * se


def test_conditional_tiny_bandwidth_locks_onto_duplicates():
    x = np.array([0.5, -0.2, 1.1])
    far = np.random.default_rng(0).normal(size=(20, 3)) + 8.0
    train = np.vstack([far, x, x])
    model = LinearModel([1.0, 2.0, -1.0])
    spec = ValueFunctionSpec("conditional", kernel_bandwidth=1e-9,
                             background_size=len(train))
    bg = build_background(train, spec, model=model)
    masks = np.array([[True, False, False],
                      [True, True, False],
                      [False, False, True]])
    v = values_for_masks(x, masks, bg, model)
    # All weight lands on the two rows equal to x, so every coalition
    # value collapses to f(x).
    assert np.allclose(v, model.score(x[None])[0], atol=1e-9)


def test_conditional_median_bandwidth_weights_normalized(maternal):
    x = maternal.X[maternal.test[3]]
    bg = build_background(maternal.train_X, ValueFunctionSpec("conditional",
                                                              background_size=50),
                          model=maternal.model)
    masks = np.array([[True] * 3 + [False] * 3])
    v = values_for_masks(x, masks, bg, maternal.model)
    scores = maternal.model.score(np.where(masks[0], x, bg.rows))
    assert scores.min() - 1e-12 <= v[0] <= scores.max() + 1e-12


# ---- counterfactual search --------------------------------------------------------


def test_counterfactual_noop_when_already_in_band(maternal):
    x = maternal.X[maternal.test[4]]
    fx = score_one(maternal.model, x)
    out = generate_counterfactual(x, maternal.model, maternal.train_X,
                                  target_score=fx, tol=0.05)
    assert np.array_equal(out, x)


def test_counterfactual_1d_logistic_inverts_sigmoid():
    model = LogisticModel(np.array([1.0]), 0.0)
    train = np.linspace(-4, 4, 200)[:, None]
    out = generate_counterfactual(np.array([3.0]), model, train,
                                  target_score=0.5, tol=0.05)
    assert abs(score_one(model, out) - 0.5) <= 0.05
    assert abs(out[0]) < 0.25


def test_counterfactual_unreachable_target_errors():
    model = LogisticModel(np.array([1.0]), 0.0)
    train = np.linspace(-1, 1, 50)[:, None]  # scores capped near 0.73
    with pytest.raises(CounterfactualSearchError) as exc:
        generate_counterfactual(np.array([0.0]), model, train,
                                target_score=0.999, tol=1e-4, budget=300)
    assert exc.value.best is not None


def test_counterfactual_prefers_few_changes(maternal):
    x = maternal.X[maternal.test[5]]
    out = generate_counterfactual(x, maternal.model, maternal.train_X, threshold=0.5)
    changed = np.sum(out != x)
    assert 1 <= changed < len(x)
