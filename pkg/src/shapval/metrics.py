"""Explanation-quality metrics and the cross-variant aggregation protocol.

Per-instance metrics come in two families. Scale-invariant ones (deletion
and insertion AUC, recall@k) share an interpretation across tasks and are
averaged directly; scale-dependent ones (sparsity, sensitivity,
contrastivity, attribution error) are converted to within-pair explainer
ranks before aggregation. Instances where a metric is undefined are
recorded as missing and excluded from means, never imputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import SchemaError
from .models import Predictor, predictive_entropy, score_one
from .seeding import substream
from .valuefunctions import BackgroundSet, ValueFunctionSpec, build_background, values_for_masks

SCALE_INVARIANT = ("deletion_auc", "insertion_auc", "recall@1", "recall@3", "recall@5")
SCALE_DEPENDENT = ("sparsity", "sensitivity", "contrastivity", "attribution_error")
HIGHER_BETTER = frozenset({"insertion_auc", "recall@1", "recall@3", "recall@5", "contrastivity"})

_DEGENERATE_EPS = 1e-12


class MarginalRemover:
    """Shared feature-removal semantics for the deletion/insertion curves.

    Removed features are averaged over a fixed product-of-marginals
    background regardless of the variant being scored, so the curves stay
    commensurable across variants.
    """

    def __init__(self, train_X: np.ndarray, model: Predictor, seed: int = 0, size: int = 100):
        spec = ValueFunctionSpec("marginal", seed=seed, background_size=size)
        self._bg: BackgroundSet = build_background(train_X, spec, model)
        self._model = model

    def expected_scores(self, x: np.ndarray, present_masks: np.ndarray,
                        model: Predictor | None = None) -> np.ndarray:
        return values_for_masks(x, present_masks, self._bg, model or self._model)


def _importance_order(phi: np.ndarray) -> np.ndarray:
    """Indices by decreasing |phi|, ties by ascending feature index."""
    d = len(phi)
    return np.lexsort((np.arange(d), -np.abs(phi)))


def deletion_auc_from_path(H: np.ndarray) -> float | None:
    """AUC from the entropy path H[0..d]; H[k] is after k removals."""
    H = np.asarray(H, dtype=np.float64)
    d = len(H) - 1
    denom = H[d] - H[0]
    if abs(denom) < _DEGENERATE_EPS:
        return None
    r = (H[1:] - H[0]) / denom
    return float(1.0 - r.mean())


def insertion_auc_from_path(H: np.ndarray) -> float | None:
    """AUC from the insertion path H[0..d]; H[k] is after k insertions."""
    H = np.asarray(H, dtype=np.float64)
    d = len(H) - 1
    denom = H[0] - H[d]
    if abs(denom) < _DEGENERATE_EPS:
        return None
    q = (H[0] - H[1:]) / denom
    return float(q.mean())


def _removal_masks(phi: np.ndarray, mode: str) -> np.ndarray:
    """Present-feature masks along the curve, step k in row k."""
    d = len(phi)
    order = _importance_order(phi)
    masks = np.ones((d + 1, d), dtype=bool)
    if mode == "deletion":
        for k in range(1, d + 1):
            masks[k] = masks[k - 1]
            masks[k, order[k - 1]] = False
    else:
        masks[:] = False
        for k in range(1, d + 1):
            masks[k] = masks[k - 1]
            masks[k, order[k - 1]] = True
    return masks


def deletion_auc(x: np.ndarray, phi: np.ndarray, model: Predictor,
                 remover: MarginalRemover) -> float | None:
    """Entropy-rise area as features are removed most-important first.

    Lower is better. None when the endpoint entropies coincide (flat
    path), which callers record as missing.
    """
    masks = _removal_masks(phi, "deletion")
    scores = remover.expected_scores(x, masks, model)
    return deletion_auc_from_path(predictive_entropy(scores))


def insertion_auc(x: np.ndarray, phi: np.ndarray, model: Predictor,
                  remover: MarginalRemover) -> float | None:
    """Entropy-recovery area as features are reinserted; higher is better."""
    masks = _removal_masks(phi, "insertion")
    scores = remover.expected_scores(x, masks, model)
    return insertion_auc_from_path(predictive_entropy(scores))


@dataclass(frozen=True)
class PerturbSpec:
    """Perturbation law for the sensitivity metric.

    Numeric coordinates get Gaussian noise with per-feature sigma;
    categorical coordinates are resampled from their marginal with the
    given probability.
    """

    sigmas: np.ndarray
    cat_pools: dict[int, np.ndarray] = field(default_factory=dict)
    cat_resample_prob: float = 0.1


def default_perturb_spec(train_X: np.ndarray, cat_mask: np.ndarray | None = None) -> PerturbSpec:
    """Sigma = 0.1 IQR per numeric feature; categoricals resampled at 0.1."""
    train_X = np.asarray(train_X, dtype=np.float64)
    q75, q25 = np.percentile(train_X, [75.0, 25.0], axis=0)
    sigmas = 0.1 * (q75 - q25)
    pools: dict[int, np.ndarray] = {}
    if cat_mask is not None:
        sigmas = np.where(cat_mask, 0.0, sigmas)
        for j in np.flatnonzero(cat_mask):
            pools[j] = np.unique(train_X[:, j])
    return PerturbSpec(sigmas, pools)


def perturb(x: np.ndarray, spec: PerturbSpec, rng: np.random.Generator) -> np.ndarray:
    z = x + spec.sigmas * rng.standard_normal(len(x))
    for j, pool in spec.cat_pools.items():
        z[j] = x[j]
        if rng.uniform() < spec.cat_resample_prob:
            z[j] = rng.choice(pool)
    return z


def perturbation_sensitivity(x: np.ndarray, explainer, model: Predictor, spec: PerturbSpec,
                             delta: float = 1e-6, n_draws: int = 8,
                             rng: np.random.Generator | None = None) -> float:
    """Mean attribution shift per unit of prediction shift under small
    perturbations; lower is better."""
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    phi0 = np.asarray(explainer(x), dtype=np.float64)
    f0 = score_one(model, x)
    vals = np.empty(n_draws)
    for i in range(n_draws):
        z = perturb(x, spec, rng)
        dphi = np.linalg.norm(np.asarray(explainer(z), dtype=np.float64) - phi0)
        vals[i] = dphi / (abs(score_one(model, z) - f0) + delta)
    return float(vals.mean())


def contrastivity(x: np.ndarray, x_prime: np.ndarray, explainer, model: Predictor,
                  delta: float = 1e-6) -> float:
    """Attribution separation across the decision boundary; higher is better."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    num = np.linalg.norm(np.asarray(explainer(x), dtype=np.float64)
                         - np.asarray(explainer(x_prime), dtype=np.float64))
    den = abs(score_one(model, x) - score_one(model, x_prime)) + delta
    return float(num / den)


def sparsity_ratio(phi: np.ndarray) -> float | None:
    """L1/L2 concentration in [1, sqrt(d)]; lower means more selective.

    None for the all-zero vector (recorded missing).
    """
    phi = np.asarray(phi, dtype=np.float64)
    l2 = np.linalg.norm(phi)
    if l2 < _DEGENERATE_EPS:
        return None
    return float(np.abs(phi).sum() / l2)


def attribution_error(phi_hat: np.ndarray, phi_ref: np.ndarray) -> float:
    phi_hat = np.asarray(phi_hat, dtype=np.float64)
    phi_ref = np.asarray(phi_ref, dtype=np.float64)
    return float(np.mean((phi_hat - phi_ref) ** 2))


def top_k(phi: np.ndarray, k: int) -> np.ndarray:
    return _importance_order(phi)[:k]


def recall_at_k(phi_hat: np.ndarray, phi_ref: np.ndarray, k: int) -> float:
    """Top-k overlap fraction; ties broken by ascending feature index."""
    k = min(k, len(phi_hat))
    a = set(top_k(np.asarray(phi_hat), k).tolist())
    b = set(top_k(np.asarray(phi_ref), k).tolist())
    return len(a & b) / k


def spearman_agreement(phi_a: np.ndarray, phi_b: np.ndarray) -> float | None:
    """Spearman correlation of |phi| ranks; None when a side has no rank
    variance (all-tied magnitudes)."""
    ra = rankdata(np.abs(np.asarray(phi_a, dtype=np.float64)))
    rb = rankdata(np.abs(np.asarray(phi_b, dtype=np.float64)))
    if ra.std() < _DEGENERATE_EPS or rb.std() < _DEGENERATE_EPS:
        return None
    return float(np.corrcoef(ra, rb)[0, 1])


# ---- aggregation -----------------------------------------------------------


@dataclass
class MetricReport:
    """Aggregated means, bootstrap SEs, missing counts, and the rank table."""

    variants: list[str]
    means: dict[str, dict[str, float]]          # metric -> variant -> value
    ses: dict[str, dict[str, float]]
    missing: dict[str, dict[str, int]]
    rank_table: dict  # (dataset, model) key -> metric -> variant -> rank
    n_boot: int
    seed: int
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rt = {" / ".join(k): v for k, v in self.rank_table.items()}
        return json.dumps({
            "schema_version": "v1",
            "variants": self.variants,
            "means": self.means, "ses": self.ses, "missing": self.missing,
            "rank_table": rt, "n_boot": self.n_boot, "seed": self.seed,
            "meta": self.meta,
        }, sort_keys=True, indent=1)

    def to_csv(self) -> str:
        lines = ["variant,metric,kind,mean,se,n_missing"]
        for metric in SCALE_DEPENDENT + SCALE_INVARIANT:
            kind = "scale_dependent_rank" if metric in SCALE_DEPENDENT else "scale_invariant"
            for v in self.variants:
                m = self.means[metric].get(v)
                s = self.ses[metric].get(v)
                miss = self.missing[metric].get(v, 0)
                mtxt = "" if m is None else f"{m:.6f}"
                stxt = "" if s is None else f"{s:.6f}"
                lines.append(f"{v},{metric},{kind},{mtxt},{stxt},{miss}")
        return "\n".join(lines) + "\n"


def _pair_stat(values_by_variant: dict[str, list], idx: np.ndarray | None
               ) -> dict[str, float]:
    """Per-variant mean over (optionally resampled) instances, NaN if empty."""
    out = {}
    for v, vals in values_by_variant.items():
        arr = [vals[i] for i in (idx if idx is not None else range(len(vals)))]
        arr = [a for a in arr if a is not None and np.isfinite(a)]
        out[v] = float(np.mean(arr)) if arr else np.nan
    return out


def _ranks(stat: dict[str, float], metric: str) -> dict[str, float]:
    """Within-pair ranks, 1 = best in the metric's own direction."""
    names = sorted(stat)
    vals = np.array([stat[v] for v in names])
    sign = -1.0 if metric in HIGHER_BETTER else 1.0
    ok = np.isfinite(vals)
    ranks = np.full(len(names), np.nan)
    if ok.sum() >= 1:
        ranks[ok] = rankdata(sign * vals[ok])
    return dict(zip(names, ranks))


def aggregate_report(per_instance: dict, n_boot: int = 50, seed: int = 0,
                     meta: dict | None = None) -> MetricReport:
    """Aggregate per-instance metrics across (dataset, model) pairs.

    ``per_instance`` maps (dataset, model) -> variant -> metric -> list of
    per-instance values with None marking missing. Lists within one pair
    must be index-aligned across variants so the bootstrap can resample
    instances jointly.
    """
    pairs = sorted(per_instance)
    if not pairs:
        raise SchemaError("no (dataset, model) pairs to aggregate")
    variants = sorted(per_instance[pairs[0]])
    if len(variants) < 2:
        raise SchemaError("ranking needs at least 2 variants")
    for pair in pairs:
        if sorted(per_instance[pair]) != variants:
            raise SchemaError(f"pair {pair} lacks some variants")

    metrics = SCALE_DEPENDENT + SCALE_INVARIANT

    def aggregate_once(idx_by_pair) -> dict[str, dict[str, float]]:
        agg: dict[str, dict[str, list]] = {m: {v: [] for v in variants} for m in metrics}
        for pair in pairs:
            for metric in metrics:
                by_variant = {v: per_instance[pair][v][metric] for v in variants}
                stat = _pair_stat(by_variant, idx_by_pair.get(pair))
                if metric in SCALE_DEPENDENT:
                    stat = _ranks(stat, metric)
                for v in variants:
                    if np.isfinite(stat[v]):
                        agg[metric][v].append(stat[v])
        return {m: {v: (float(np.mean(a)) if a else None) for v, a in mv.items()}
                for m, mv in agg.items()}

    means = aggregate_once({})

    boots: list[dict] = []
    for b in range(n_boot):
        idx_by_pair = {}
        for pair in pairs:
            any_variant = variants[0]
            n = len(per_instance[pair][any_variant][metrics[0]])
            rng = substream(seed, "metric-boot", b, pair)
            idx_by_pair[pair] = rng.integers(0, n, size=n)
        boots.append(aggregate_once(idx_by_pair))

    ses: dict[str, dict[str, float]] = {m: {} for m in metrics}
    for m in metrics:
        for v in variants:
            draws = [bt[m][v] for bt in boots if bt[m][v] is not None]
            ses[m][v] = float(np.std(draws, ddof=1)) if len(draws) > 1 else None

    missing: dict[str, dict[str, int]] = {m: {} for m in metrics}
    for m in metrics:
        for v in variants:
            missing[m][v] = sum(
                sum(1 for a in per_instance[pair][v][m] if a is None or not np.isfinite(a))
                for pair in pairs)

    rank_table = {}
    for pair in pairs:
        rank_table[pair] = {}
        for metric in SCALE_DEPENDENT:
            by_variant = {v: per_instance[pair][v][metric] for v in variants}
            rank_table[pair][metric] = _ranks(_pair_stat(by_variant, None), metric)

    return MetricReport(variants, means, ses, missing, rank_table, n_boot, seed, meta or {})


@dataclass
class AgreementMatrix:
    variants: list[str]
    matrix: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"schema_version": "v1", "variants": self.variants,
                           "matrix": np.round(self.matrix, 10).tolist()}, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.variants)]
        for i, v in enumerate(self.variants):
            lines.append(v + "," + ",".join(f"{x:.6f}" for x in self.matrix[i]))
        return "\n".join(lines) + "\n"


def compute_agreement(phis: dict[str, np.ndarray]) -> AgreementMatrix:
    """Mean Spearman agreement between variants over shared instances."""
    variants = sorted(phis)
    k = len(variants)
    M = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            A, B = phis[variants[i]], phis[variants[j]]
            if len(A) != len(B):
                raise SchemaError("agreement needs index-aligned attribution arrays")
            vals = [spearman_agreement(a, b) for a, b in zip(A, B)]
            vals = [v for v in vals if v is not None]
            M[i, j] = M[j, i] = float(np.mean(vals)) if vals else np.nan
    return AgreementMatrix(variants, M)
