"""Explanation-quality metrics: closed forms, invariants, and aggregation."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapval.errors import SchemaError
from shapval.metrics import (SCALE_DEPENDENT, SCALE_INVARIANT, MarginalRemover,
                             PerturbSpec, aggregate_report, attribution_error,
                             compute_agreement, contrastivity, deletion_auc,
                             deletion_auc_from_path, insertion_auc_from_path,
                             perturbation_sensitivity, recall_at_k, sparsity_ratio,
                             spearman_agreement, top_k)
from shapval.models import score_one
from shapval.oracle import exact_shapley
from shapval.valuefunctions import ValueFunctionSpec, build_background

ALL_METRICS = SCALE_DEPENDENT + SCALE_INVARIANT


class Sigmoid:
    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64)

    def score(self, X):
        z = np.atleast_2d(np.asarray(X, dtype=np.float64)) @ self.w
        return 1.0 / (1.0 + np.exp(-z))


# ---- curve arithmetic -------------------------------------------------------


def test_deletion_auc_linear_path():
    H = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    assert deletion_auc_from_path(H) == pytest.approx(0.375, abs=1e-12)


def test_deletion_auc_immediate_degradation():
    H = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
    assert deletion_auc_from_path(H) == pytest.approx(0.0, abs=1e-12)


def test_insertion_auc_immediate_recovery():
    H = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    assert insertion_auc_from_path(H) == pytest.approx(1.0, abs=1e-12)


def test_insertion_auc_linear_path():
    H = np.array([1.0, 0.75, 0.5, 0.25, 0.0])
    assert insertion_auc_from_path(H) == pytest.approx(0.625, abs=1e-12)


def test_flat_path_is_missing():
    H = np.full(5, 0.3)
    assert deletion_auc_from_path(H) is None
    assert insertion_auc_from_path(H) is None


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=10))
def test_deletion_insertion_duality(vals):
    # On one shared path the two areas partition the unit square exactly.
    H = np.asarray(vals)
    d, i = deletion_auc_from_path(H), insertion_auc_from_path(H)
    if d is None:
        assert i is None
    else:
        assert d + i == pytest.approx(1.0, abs=1e-9)


def test_oracle_beats_random_on_deletion():
    # Paired comparison: exact attributions should empty the prediction's
    # information content faster than noise does, on every random restart.
    model = Sigmoid([2.0, -1.5, 1.0, 0.5, -0.5, 0.25])
    rng = np.random.default_rng(0)
    train = rng.normal(size=(200, 6))
    X = rng.normal(size=(15, 6))
    remover = MarginalRemover(train, model, seed=0)
    bg = build_background(train, ValueFunctionSpec("marginal", background_size=50),
                          model=model)
    oracle = [deletion_auc(x, exact_shapley(x, bg, model).phi, model, remover)
              for x in X]
    oracle_mean = np.mean([a for a in oracle if a is not None])
    rand_means = []
    for s in range(20):
        r = np.random.default_rng(100 + s)
        vals = [deletion_auc(x, r.normal(size=6), model, remover) for x in X]
        rand_means.append(np.mean([a for a in vals if a is not None]))
    assert oracle_mean < np.mean(rand_means)
    assert oracle_mean < min(rand_means)


def test_remover_full_mask_returns_model_score():
    model = Sigmoid([1.0, -1.0])
    rng = np.random.default_rng(3)
    train = rng.normal(size=(50, 2))
    remover = MarginalRemover(train, model, seed=0)
    x = np.array([0.4, -0.2])
    got = remover.expected_scores(x, np.ones((1, 2), dtype=bool))
    assert got[0] == pytest.approx(score_one(model, x), abs=1e-12)


# ---- sensitivity ------------------------------------------------------------


def test_sensitivity_constant_explainer_is_zero():
    model = Sigmoid([1.0, 1.0])
    spec = PerturbSpec(sigmas=np.array([0.5, 0.5]))
    val = perturbation_sensitivity(np.zeros(2), lambda z: np.array([1.0, 2.0]),
                                   model, spec, rng=np.random.default_rng(0))
    assert val == pytest.approx(0.0, abs=1e-12)


def test_sensitivity_identity_explainer_near_one():
    class Identity:
        def score(self, X):
            return np.atleast_2d(np.asarray(X, dtype=np.float64))[:, 0]

    spec = PerturbSpec(sigmas=np.array([1.0]))
    val = perturbation_sensitivity(np.array([0.3]), lambda z: z.copy(), Identity(),
                                   spec, delta=1e-12, n_draws=16,
                                   rng=np.random.default_rng(1))
    assert val == pytest.approx(1.0, abs=1e-6)


def test_sensitivity_gain_ratio():
    class Gain:
        def __init__(self, g):
            self.g = g

        def score(self, X):
            return self.g * np.atleast_2d(np.asarray(X, dtype=np.float64))[:, 0]

    spec = PerturbSpec(sigmas=np.array([1.0]))
    val = perturbation_sensitivity(np.array([0.3]), lambda z: 3.0 * z, Gain(2.0),
                                   spec, n_draws=32, rng=np.random.default_rng(5))
    assert abs(val - 1.5) / 1.5 <= 0.05


def test_categorical_perturbation_stays_in_pool():
    rng = np.random.default_rng(7)
    train = np.column_stack([rng.normal(size=100), rng.integers(0, 3, size=100)])
    from shapval.metrics import default_perturb_spec, perturb

    spec = default_perturb_spec(train, cat_mask=np.array([False, True]))
    x = np.array([0.0, 1.0])
    draws = np.array([perturb(x, spec, rng) for _ in range(200)])
    assert set(np.unique(draws[:, 1])) <= {0.0, 1.0, 2.0}
    assert draws[:, 0].std() > 0


# ---- contrastivity ----------------------------------------------------------


def test_contrastivity_constant_explainer_zero():
    model = Sigmoid([1.0])
    val = contrastivity(np.array([0.2]), np.array([-0.8]),
                        lambda z: np.array([1.0]), model)
    assert val == pytest.approx(0.0, abs=1e-12)


def test_contrastivity_degenerate_pair_zero():
    model = Sigmoid([1.0])
    x = np.array([0.4])
    val = contrastivity(x, x, lambda z: 2.0 * z, model)
    assert val == pytest.approx(0.0, abs=1e-12)


def test_contrastivity_homogeneity():
    model = Sigmoid([1.0, -2.0])
    x, xp = np.array([0.5, 0.1]), np.array([-0.3, 0.6])
    base = contrastivity(x, xp, lambda z: z * np.array([1.0, 3.0]), model)
    scaled = contrastivity(x, xp, lambda z: 2.5 * z * np.array([1.0, 3.0]), model)
    assert scaled == pytest.approx(2.5 * base, rel=1e-12)


# ---- vector metrics ---------------------------------------------------------


def test_sparsity_closed_forms():
    assert sparsity_ratio(np.array([1.0, 0, 0, 0])) == pytest.approx(1.0)
    assert sparsity_ratio(np.array([1.0, 1, 1, 1])) == pytest.approx(2.0)
    assert sparsity_ratio(np.array([3.0, 4.0])) == pytest.approx(1.4)
    assert sparsity_ratio(np.zeros(3)) is None


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_sparsity_bounds(vals):
    phi = np.asarray(vals)
    s = sparsity_ratio(phi)
    if s is not None:
        assert 1.0 - 1e-9 <= s <= np.sqrt(len(phi)) + 1e-9


def test_attribution_error_closed_forms():
    a = np.array([0.5, -1.0, 2.0])
    assert attribution_error(a, a) == 0.0
    assert attribution_error(a + 1.0, a) == pytest.approx(1.0)


def test_recall_closed_forms():
    a = np.array([5.0, 4.0, 0.1, 0.2])
    assert recall_at_k(a, a, 2) == 1.0
    b = np.array([0.1, 0.2, 4.0, 5.0])
    assert recall_at_k(a, b, 2) == 0.0
    assert recall_at_k(a, b, 4) == 1.0


def test_recall_tie_break_by_index():
    assert np.array_equal(top_k(np.array([1.0, -1.0, 2.0]), 2), [2, 0])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8),
       st.lists(st.floats(-10, 10), min_size=2, max_size=8))
def test_recall_recovered_count_monotone(a, b):
    # The number of jointly recovered features can only grow with k. The
    # ratio itself may dip when exactly one side adds a shared feature.
    d = min(len(a), len(b))
    pa, pb = np.asarray(a[:d]), np.asarray(b[:d])
    counts = [recall_at_k(pa, pb, k) * k for k in range(1, d + 1)]
    assert all(c2 >= c1 - 1e-9 for c1, c2 in zip(counts, counts[1:]))
    assert counts[-1] == pytest.approx(d)


def test_spearman_closed_forms():
    assert spearman_agreement(np.array([1.0, 2, 3]),
                              np.array([10.0, 20, 30])) == pytest.approx(1.0)
    assert spearman_agreement(np.array([1.0, 2, 3]),
                              np.array([3.0, 2, 1])) == pytest.approx(-1.0)
    assert spearman_agreement(np.array([1.0, 1, 1]), np.array([1.0, 2, 3])) is None


def test_permutation_equivariance():
    rng = np.random.default_rng(11)
    phi = rng.normal(size=6)
    ref = rng.normal(size=6)
    for _ in range(20):
        perm = rng.permutation(6)
        assert sparsity_ratio(phi[perm]) == pytest.approx(sparsity_ratio(phi))
        assert attribution_error(phi[perm], ref[perm]) == pytest.approx(
            attribution_error(phi, ref))
        assert spearman_agreement(phi[perm], ref[perm]) == pytest.approx(
            spearman_agreement(phi, ref))
        assert recall_at_k(phi[perm], ref[perm], 3) == recall_at_k(phi, ref, 3)


# ---- aggregation ------------------------------------------------------------


def _full_metrics(overrides: dict, m: int, fill: float = 0.5) -> dict:
    out = {metric: [fill] * m for metric in ALL_METRICS}
    out.update({k: list(v) for k, v in overrides.items()})
    return out


def test_aggregate_dominant_variant_gets_rank_one():
    per = {}
    for pair in (("ds1", "logistic"), ("ds2", "gbdt")):
        per[pair] = {
            "a": _full_metrics({"sparsity": [1.0, 1.1], "sensitivity": [0.1, 0.2],
                                "contrastivity": [5.0, 6.0],
                                "attribution_error": [0.01, 0.02]}, 2),
            "b": _full_metrics({"sparsity": [2.0, 2.1], "sensitivity": [1.1, 1.2],
                                "contrastivity": [1.0, 2.0],
                                "attribution_error": [0.5, 0.6]}, 2),
            "c": _full_metrics({"sparsity": [3.0, 3.1], "sensitivity": [2.1, 2.2],
                                "contrastivity": [0.1, 0.2],
                                "attribution_error": [1.5, 1.6]}, 2),
        }
    rep = aggregate_report(per, n_boot=5, seed=0)
    for metric in SCALE_DEPENDENT:
        assert rep.means[metric]["a"] == 1.0
        assert rep.means[metric]["c"] == 3.0
        for pair in per:
            assert rep.rank_table[pair][metric]["a"] == 1.0


def test_aggregate_tied_variants_share_rank():
    per = {("ds", "m"): {
        "a": _full_metrics({"sparsity": [1.5, 1.5]}, 2),
        "b": _full_metrics({"sparsity": [1.5, 1.5]}, 2),
    }}
    rep = aggregate_report(per, n_boot=5, seed=0)
    assert rep.means["sparsity"]["a"] == 1.5
    assert rep.means["sparsity"]["b"] == 1.5


def test_aggregate_scale_invariant_metrics_average_raw_values():
    per = {("ds", "m"): {
        "a": _full_metrics({"deletion_auc": [0.2, 0.4, None]}, 3),
        "b": _full_metrics({"deletion_auc": [0.6, 0.8, 1.0]}, 3),
    }}
    rep = aggregate_report(per, n_boot=5, seed=0)
    assert rep.means["deletion_auc"]["a"] == pytest.approx(0.3)
    assert rep.means["deletion_auc"]["b"] == pytest.approx(0.8)
    assert rep.missing["deletion_auc"]["a"] == 1
    assert rep.missing["deletion_auc"]["b"] == 0


def test_aggregate_rejects_degenerate_inputs():
    with pytest.raises(SchemaError):
        aggregate_report({}, n_boot=5)
    only_one = {("ds", "m"): {"a": _full_metrics({}, 2)}}
    with pytest.raises(SchemaError):
        aggregate_report(only_one, n_boot=5)
    mismatched = {
        ("ds1", "m"): {"a": _full_metrics({}, 2), "b": _full_metrics({}, 2)},
        ("ds2", "m"): {"a": _full_metrics({}, 2), "c": _full_metrics({}, 2)},
    }
    with pytest.raises(SchemaError):
        aggregate_report(mismatched, n_boot=5)


def test_bootstrap_se_shrinks_with_sample_size():
    def fixture(m):
        r = np.random.default_rng(1)
        return {("syn", "toy"): {v: {met: list(r.normal(size=m)) for met in ALL_METRICS}
                                 for v in ("a", "b")}}

    ses = {m: aggregate_report(fixture(m), n_boot=400, seed=0)
           .ses["deletion_auc"]["a"] for m in (50, 200, 800)}
    assert ses[800] < ses[200] < ses[50]
    ratio = ses[50] / ses[800]
    assert 2.8 <= ratio <= 5.7


def test_rank_table_invariant_under_monotone_transform():
    rng = np.random.default_rng(13)
    def build(transform):
        per = {}
        for pair in (("ds1", "m"), ("ds2", "m")):
            r = np.random.default_rng(hash(pair) % 2**32)
            per[pair] = {v: _full_metrics(
                {"sparsity": [transform(val) for val in r.uniform(1, 3, size=4)]}, 4)
                for v in ("a", "b", "c")}
        return per

    plain = aggregate_report(build(lambda v: v), n_boot=2, seed=0)
    warped = aggregate_report(build(lambda v: np.exp(v)), n_boot=2, seed=0)
    for pair in plain.rank_table:
        assert plain.rank_table[pair]["sparsity"] == warped.rank_table[pair]["sparsity"]


def test_report_serialization():
    per = {("ds", "m"): {
        "a": _full_metrics({}, 2),
        "b": _full_metrics({}, 2),
    }}
    rep = aggregate_report(per, n_boot=3, seed=0, meta={"note": "fixture"})
    obj = json.loads(rep.to_json())
    assert obj["schema_version"] == "v1"
    assert obj["meta"] == {"note": "fixture"}
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == "variant,metric,kind,mean,se,n_missing"
    assert len(lines) == 1 + len(ALL_METRICS) * 2


def test_agreement_matrix_properties():
    rng = np.random.default_rng(17)
    phis = {"a": rng.normal(size=(10, 5)), "b": rng.normal(size=(10, 5))}
    phis["c"] = phis["a"].copy()
    mat = compute_agreement(phis)
    assert mat.variants == ["a", "b", "c"]
    assert np.allclose(mat.matrix, mat.matrix.T)
    assert np.allclose(np.diag(mat.matrix), 1.0)
    assert np.all(mat.matrix >= -1 - 1e-9) and np.all(mat.matrix <= 1 + 1e-9)
    ia, ic = 0, 2
    assert mat.matrix[ia, ic] == pytest.approx(1.0)
