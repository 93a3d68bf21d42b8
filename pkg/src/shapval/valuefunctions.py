"""Coalition value functions: what "feature absent" means.

Every variant reduces to the same mechanical core: a background set of
replacement rows, a splice that imputes absent coordinates from those rows,
and a (possibly weighted) average of model scores over the splice. The
eight variants differ only in where the rows come from and how they are
weighted:

fixed_zero / fixed_mean  single reference row (zeros, or training means)
uniform                  independent draws from each feature's range
marginal                 per-feature independent draws from the data
joint_marginal           whole rows drawn from the data
conditional              whole rows, proximity-weighted toward x on the
                         present coordinates (Gaussian kernel)
counterfactual           independently searched counterfactuals of x
filtered_conditional     whole rows restricted to a model-output band
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from .errors import CounterfactualSearchError, EmptyFilterError, SchemaError
from .models import Predictor, score_one
from .seeding import instance_key, substream

VARIANTS = (
    "fixed_zero", "fixed_mean", "uniform", "marginal",
    "joint_marginal", "conditional", "counterfactual", "filtered_conditional",
)

DEFAULT_BACKGROUND_SIZE = 100

# Optional parameters each variant accepts; anything else set on the spec
# is a configuration error.
_ALLOWED = {
    "fixed_zero": {"baseline"},
    "fixed_mean": {"baseline"},
    "uniform": {"background_size", "bounds"},
    "marginal": {"background_size"},
    "joint_marginal": {"background_size"},
    "conditional": {"background_size", "kernel_bandwidth"},
    "counterfactual": {"background_size", "target_score", "target_tol", "search_budget", "threshold"},
    "filtered_conditional": {"background_size", "output_filter", "threshold"},
}


@dataclass(frozen=True)
class ValueFunctionSpec:
    """Variant name plus exactly the parameters that variant accepts.

    Unset parameters stay None and resolve to variant defaults at build
    time; setting a parameter a variant does not use raises SchemaError.
    """

    variant: str
    seed: int = 0
    background_size: int | None = None
    baseline: tuple | None = None
    bounds: tuple | None = None
    kernel_bandwidth: float | None = None
    output_filter: tuple | None = None
    threshold: float | None = None
    target_score: float | None = None
    target_tol: float | None = None
    search_budget: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SchemaError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        allowed = _ALLOWED[self.variant]
        for f in fields(self):
            if f.name in ("variant", "seed"):
                continue
            if getattr(self, f.name) is not None and f.name not in allowed:
                raise SchemaError(f"variant {self.variant!r} does not take {f.name!r}")

    def resolved_background_size(self) -> int:
        return self.background_size if self.background_size is not None else DEFAULT_BACKGROUND_SIZE

    def fingerprint(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        text = json.dumps(payload, sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class BackgroundSet:
    """Replacement rows for one (spec, instance) pair.

    ``base_value`` is v(empty set): the unconditional mean score over the
    rows. ``scales`` and ``cat_mask`` feed the conditional kernel.
    """

    spec: ValueFunctionSpec
    rows: np.ndarray
    base_value: float
    scales: np.ndarray | None = None
    cat_mask: np.ndarray | None = None


def _distance_scales(train_X: np.ndarray) -> np.ndarray:
    s = train_X.std(axis=0)
    return np.maximum(s, 1e-9)


def _uniform_rows(train_X, spec, cat_mask, rng, size):
    d = train_X.shape[1]
    if spec.bounds is not None:
        lo = np.asarray(spec.bounds[0], dtype=np.float64)
        hi = np.asarray(spec.bounds[1], dtype=np.float64)
    else:
        lo, hi = train_X.min(axis=0), train_X.max(axis=0)
    rows = rng.uniform(lo, hi, size=(size, d))
    if cat_mask is not None and cat_mask.any():
        for j in np.flatnonzero(cat_mask):
            codes = np.unique(train_X[:, j])
            rows[:, j] = rng.choice(codes, size=size)
    return rows


def _subsample_rows(train_X, rng, size):
    n = len(train_X)
    if size >= n:
        return train_X.copy()
    idx = rng.choice(n, size=size, replace=False)
    return train_X[np.sort(idx)]


def resolve_output_filter(spec: ValueFunctionSpec, fx: float) -> tuple[float, float]:
    """Output band for filtered_conditional; defaults to the far side of
    the operational threshold from f(x)."""
    if spec.output_filter is not None:
        lo, hi = spec.output_filter
        return float(lo), float(hi)
    thr = spec.threshold if spec.threshold is not None else 0.5
    return (0.0, thr) if fx >= thr else (thr, 1.0)


def build_background(train_X: np.ndarray, spec: ValueFunctionSpec, model: Predictor | None = None,
                     x: np.ndarray | None = None, cat_mask: np.ndarray | None = None) -> BackgroundSet:
    """Materialize the background set for ``spec``.

    ``x`` is required by the instance-dependent variants (counterfactual,
    and filtered_conditional under the default filter). Deterministic in
    (train_X, spec, x).
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    d = train_X.shape[1]
    size = spec.resolved_background_size()
    v = spec.variant

    if v in ("fixed_zero", "fixed_mean"):
        if spec.baseline is not None:
            row = np.asarray(spec.baseline, dtype=np.float64)
            if row.shape != (d,):
                raise SchemaError(f"baseline has shape {row.shape}, expected ({d},)")
        elif v == "fixed_zero":
            row = np.zeros(d)
        else:
            row = train_X.mean(axis=0)
        rows = row[None, :]
    elif v == "uniform":
        rng = substream(spec.seed, "background", v)
        rows = _uniform_rows(train_X, spec, cat_mask, rng, size)
    elif v == "marginal":
        rng = substream(spec.seed, "background", v)
        # Independent per-column draws so the rows carry product-of-marginals
        # structure rather than joint rows.
        rows = np.empty((size, d))
        for j in range(d):
            rows[:, j] = train_X[rng.integers(0, len(train_X), size), j]
    elif v in ("joint_marginal", "conditional"):
        rng = substream(spec.seed, "background", v)
        rows = _subsample_rows(train_X, rng, size)
    elif v == "filtered_conditional":
        if model is None:
            raise SchemaError("filtered_conditional needs the model to filter on")
        if spec.output_filter is None and x is None:
            raise SchemaError("default output filter needs the instance x")
        fx = score_one(model, x) if x is not None else None
        lo, hi = resolve_output_filter(spec, fx if fx is not None else 0.0)
        scores = model.score(train_X)
        keep = (scores >= lo) & (scores <= hi)
        if not keep.any():
            raise EmptyFilterError(f"no training rows score inside [{lo:.3f}, {hi:.3f}]")
        pool = train_X[keep]
        rng = substream(spec.seed, "background", v, instance_key(x) if x is not None else "")
        rows = _subsample_rows(pool, rng, size)
    elif v == "counterfactual":
        if model is None or x is None:
            raise SchemaError("counterfactual background needs both model and x")
        rows = _counterfactual_rows(train_X, spec, model, x, cat_mask, size)
    else:  # pragma: no cover - guarded by the spec validator
        raise SchemaError(f"unknown variant {v!r}")

    bg = BackgroundSet(spec, rows, 0.0, cat_mask=cat_mask)
    if v == "conditional":
        bg.scales = _distance_scales(train_X)
    if model is not None:
        bg.base_value = float(model.score(rows).mean())
    return bg


def impute(x: np.ndarray, mask: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Splice: present coordinates (mask True) from x, the rest from rows."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask[None, :], x[None, :], rows)


def _conditional_weights(D2: np.ndarray, bandwidth: float | None) -> np.ndarray:
    """Gaussian kernel weights row-normalized per coalition.

    D2 has shape (K, B): squared conditioning distance of each background
    row to x, restricted to the present coordinates of each coalition.
    Without an explicit bandwidth, each coalition uses the median of its
    own distances (the median heuristic), so coalitions of different sizes
    stay comparably concentrated.
    """
    if bandwidth is not None:
        h = np.full(D2.shape[0], float(bandwidth))
    else:
        h = np.sqrt(np.median(D2, axis=1))
    h = np.maximum(h, 1e-12)
    logw = -0.5 * D2 / (h * h)[:, None]
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def _unit_sq_distances(x: np.ndarray, bg: BackgroundSet) -> np.ndarray:
    """Per-coordinate squared distances between x and each background row.

    Numeric coordinates are scale-normalized; categorical coordinates are
    mismatch indicators.
    """
    diff = (bg.rows - x[None, :]) / bg.scales[None, :]
    U = diff * diff
    if bg.cat_mask is not None and bg.cat_mask.any():
        cm = bg.cat_mask
        U[:, cm] = (bg.rows[:, cm] != x[None, cm]).astype(np.float64)
    return U


def values_for_masks(x: np.ndarray, masks: np.ndarray, bg: BackgroundSet, model: Predictor,
                     chunk_size: int = 2048) -> np.ndarray:
    """Coalition values v_x(S) for a batch of masks, shape (K,).

    Full masks shortcut to f(x) and empty masks to the cached base value,
    so the two endpoints are exact rather than Monte Carlo. Background rows
    are shared across masks (common random numbers).
    """
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    K, d = masks.shape
    out = np.empty(K)
    full = masks.all(axis=1)
    empty = ~masks.any(axis=1)
    if full.any():
        out[full] = score_one(model, x)
    if empty.any():
        out[empty] = bg.base_value
    todo = np.flatnonzero(~full & ~empty)
    if todo.size == 0:
        return out

    conditional = bg.spec.variant == "conditional"
    U = _unit_sq_distances(x, bg) if conditional else None
    B = len(bg.rows)
    step = max(1, chunk_size // max(B, 1))
    for start in range(0, todo.size, step):
        sel = todo[start:start + step]
        m = masks[sel]
        batch = np.where(m[:, None, :], x[None, None, :], bg.rows[None, :, :])
        scores = model.score(batch.reshape(-1, d)).reshape(len(sel), B)
        if conditional:
            D2 = m.astype(np.float64) @ U.T
            w = _conditional_weights(D2, bg.spec.kernel_bandwidth)
            out[sel] = (w * scores).sum(axis=1)
        else:
            out[sel] = scores.mean(axis=1)
    return out


def value(x: np.ndarray, mask: np.ndarray, bg: BackgroundSet, model: Predictor) -> float:
    """Single-coalition convenience wrapper over values_for_masks."""
    return float(values_for_masks(x, np.asarray(mask, dtype=bool)[None, :], bg, model)[0])


def _counterfactual_rows(train_X, spec, model, x, cat_mask, size):
    pool_scores = model.score(train_X)
    thr = spec.threshold if spec.threshold is not None else 0.5
    tol = spec.target_tol if spec.target_tol is not None else 0.05
    if spec.target_score is not None:
        target = float(spec.target_score)
    else:
        side = 1.0 if score_one(model, x) >= thr else -1.0
        target = thr - side * 2.0 * tol
    rows = np.empty((size, len(x)))
    for b in range(size):
        rng = substream(spec.seed, "counterfactual", instance_key(np.asarray(x, dtype=np.float64)), b)
        # Jitter the target inside its own band so independent draws land
        # on distinct points even when they share a seed row.
        jitter = rng.uniform(-0.5 * tol, 0.5 * tol) if size > 1 else 0.0
        rows[b] = generate_counterfactual(
            x, model, train_X,
            cat_mask=cat_mask,
            threshold=thr,
            target_score=target + jitter,
            tol=tol,
            budget=spec.search_budget if spec.search_budget is not None else 2000,
            rng=rng,
            train_scores=pool_scores,
        )
    return rows


def generate_counterfactual(x: np.ndarray, model: Predictor, train_X: np.ndarray, *,
                            cat_mask: np.ndarray | None = None, threshold: float = 0.5,
                            target_score: float | None = None, tol: float = 0.05,
                            budget: int = 2000, rng: np.random.Generator | None = None,
                            train_scores: np.ndarray | None = None) -> np.ndarray:
    """Search a nearby input whose score lands in the target band.

    The target defaults to just across the operational threshold from
    f(x). Strategy: pick a training row already near the target, bisect
    along the straight path from x to it until the score enters
    [target - tol, target + tol], then greedily revert untouched
    coordinates and shrink the remaining changes. ``budget`` caps model
    evaluations on candidate points; exceeding it raises
    CounterfactualSearchError carrying the best candidate found.
    """
    x = np.asarray(x, dtype=np.float64)
    train_X = np.asarray(train_X, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    evals = [0]
    best = {"z": None, "gap": np.inf}

    def f(z):
        evals[0] += 1
        if evals[0] > budget:
            raise CounterfactualSearchError(
                f"budget of {budget} evaluations exhausted", best=best["z"], best_score=best["gap"])
        s = score_one(model, z)
        gap = abs(s - target)
        if gap < best["gap"]:
            best["z"], best["gap"] = z.copy(), gap
        return s

    fx = score_one(model, x)
    if target_score is not None:
        target = float(target_score)
    else:
        side = 1.0 if fx >= threshold else -1.0
        target = threshold - side * 2.0 * tol
    feasible = lambda s: abs(s - target) <= tol
    if feasible(fx):
        return x.copy()

    def blend(seed_row, t):
        z = x + t * (seed_row - x)
        if cat_mask is not None and cat_mask.any():
            z[cat_mask] = np.where(t >= 0.5, seed_row[cat_mask], x[cat_mask])
        return z

    if train_scores is None:
        train_scores = model.score(train_X)
    order = np.argsort(np.abs(train_scores - target), kind="stable")
    n_pool = min(25, len(order))
    seed_ids = rng.permutation(order[:n_pool])[:5]

    z_found = None
    for sid in seed_ids:
        seed_row = train_X[sid]
        s1 = f(blend(seed_row, 1.0))
        if feasible(s1):
            z_found = blend(seed_row, 1.0)
            break
        # Bisect only when the path brackets the target.
        s0 = fx
        if (s0 - target) * (s1 - target) > 0:
            continue
        lo, hi = 0.0, 1.0
        g_lo = s0 - target
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            s = f(blend(seed_row, mid))
            if feasible(s):
                z_found = blend(seed_row, mid)
                break
            if (s - target) * g_lo > 0:
                lo = mid
                g_lo = s - target
            else:
                hi = mid
        if z_found is not None:
            break
    if z_found is None:
        raise CounterfactualSearchError(
            "no feasible counterfactual among seed paths", best=best["z"], best_score=best["gap"])

    # Sparsity: revert coordinates one at a time, smallest change first.
    changed = np.flatnonzero(z_found != x)
    order2 = changed[np.argsort(np.abs(z_found[changed] - x[changed]), kind="stable")]
    for j in order2:
        trial = z_found.copy()
        trial[j] = x[j]
        if feasible(f(trial)):
            z_found = trial

    # Proximity: shrink surviving numeric changes toward x.
    for j in np.flatnonzero(z_found != x):
        if cat_mask is not None and cat_mask[j]:
            continue
        delta = z_found[j] - x[j]
        lo_a, hi_a = 0.0, 1.0  # fraction of the change kept
        kept = 1.0
        for _ in range(6):
            mid = 0.5 * (lo_a + hi_a)
            trial = z_found.copy()
            trial[j] = x[j] + mid * delta
            if feasible(f(trial)):
                hi_a = mid
                kept = mid
            else:
                lo_a = mid
        z_found[j] = x[j] + kept * delta
    return z_found
