"""Fixed-effects outcome models over review logs.

Four outcomes: accuracy (logistic), confidence (proportional-odds ordinal),
clarity (logistic with population-mean arm coding), and decision time
(quantile regression on log(1+t)). Analyst heterogeneity is controlled by
fixed identity dummies; columns that end up collinear (analyst traits are
absorbed by identity dummies whenever both are present) are pruned
deterministically and reported, never silently kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import SchemaError
from .models import predictive_entropy
from .seeding import substream
from .study import EXPLANATION_ARMS

OUTCOMES = ("accuracy", "confidence", "clarity", "time")
TIME_QUANTILES = (0.025, 0.5, 0.975)


@dataclass
class DesignMatrix:
    outcome: str
    y: np.ndarray
    X: np.ndarray
    columns: list[str]
    dropped: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]


@dataclass
class EffectEstimate:
    name: str
    effect: float          # exp(beta)
    ci_low: float
    ci_high: float
    se: float              # SE of the effect via the delta method
    scale: str             # "odds_ratio" | "time_multiplier"

    def as_dict(self) -> dict:
        return {"name": self.name, "effect": self.effect, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "se": self.se, "scale": self.scale}


def _sorted_unique(values) -> list:
    return sorted(set(values))


def build_design_matrix(records: list[dict], outcome: str) -> DesignMatrix:
    """Assemble response and predictors per the fixed-effects design.

    Reference coding: arm reference is the no-explanation control except
    for clarity, which uses sum-to-zero coding over the explanation arms
    (control rows are dropped there). Exposure is the analyst's 1-based
    running case index entering as log(1+count). The absolute score error
    |f(x) - y| is standardized. Collinear columns are pruned greedily in
    declaration order and listed in ``dropped``.
    """
    if outcome not in OUTCOMES:
        raise SchemaError(f"unknown outcome {outcome!r}")
    if not records:
        raise SchemaError("empty log")

    recs = sorted(records, key=lambda r: (r["analyst_id"], r["submitted_at"],
                                          r.get("record_index", 0)))
    exposure: dict[str, int] = {}
    rows = []
    for r in recs:
        exposure[r["analyst_id"]] = exposure.get(r["analyst_id"], 0) + 1
        if outcome == "clarity":
            if r["arm"] == "none" or r["clarity"] == "not_applicable":
                continue
        rows.append((r, exposure[r["analyst_id"]]))
    if not rows:
        raise SchemaError(f"no usable rows for outcome {outcome!r}")

    if outcome == "accuracy":
        y = np.array([1.0 if (rec["decision"] == "risk") == (rec["true_label"] == 1) else 0.0
                      for rec, _ in rows])
    elif outcome == "confidence":
        levels = {"weak": 0.0, "moderate": 1.0, "strong": 2.0}
        y = np.array([levels[rec["confidence"]] for rec, _ in rows])
    elif outcome == "clarity":
        y = np.array([1.0 if rec["clarity"] == "clear" else 0.0 for rec, _ in rows])
    else:
        y = np.array([np.log1p(float(rec["view_duration"])) for rec, _ in rows])

    if outcome in ("accuracy", "clarity") and len(set(y.tolist())) < 2:
        raise SchemaError(f"outcome {outcome!r}: response has a single class")
    if outcome == "confidence" and len(set(y.tolist())) < 2:
        raise SchemaError("outcome 'confidence': response has a single level")

    n = len(rows)
    cols: list[tuple[str, np.ndarray]] = [("intercept", np.ones(n))]

    def dummies(values: list, prefix: str, drop_first: bool):
        levels = _sorted_unique(values)
        arr = np.asarray(values, dtype=object)
        for lv in (levels[1:] if drop_first else levels):
            cols.append((f"{prefix}{lv}", (arr == lv).astype(np.float64)))

    arm_values = [rec["arm"] for rec, _ in rows]
    arms_sorted = sorted(EXPLANATION_ARMS)
    if outcome == "clarity":
        # Sum-to-zero coding: effects are offsets from the population mean.
        arr = np.asarray(arm_values, dtype=object)
        last = arr == arms_sorted[-1]
        for a in arms_sorted[:-1]:
            cols.append((f"arm_{a}", (arr == a).astype(np.float64) - last))
    else:
        arr = np.asarray(arm_values, dtype=object)
        for a in arms_sorted:
            cols.append((f"arm_{a}", (arr == a).astype(np.float64)))

    dummies([rec["dataset"] for rec, _ in rows], "dataset_", drop_first=True)
    dummies([rec.get("model", "") for rec, _ in rows], "model_", drop_first=True)

    scores = np.array([float(rec["model_score"]) for rec, _ in rows])
    labels = np.array([float(rec["true_label"]) for rec, _ in rows])
    cols.append(("entropy", predictive_entropy(scores)))
    err = np.abs(scores - labels)
    sd = err.std()
    cols.append(("abs_error_std", (err - err.mean()) / sd if sd > 1e-12 else err - err.mean()))
    cols.append(("log_exposure", np.array([np.log1p(float(k)) for _, k in rows])))
    cols.append(("professional", np.array([1.0 if rec.get("professional") else 0.0
                                           for rec, _ in rows])))
    cols.append(("ml_moderate", np.array([1.0 if rec.get("ml_knowledge") == "moderate" else 0.0
                                          for rec, _ in rows])))
    cols.append(("ml_high", np.array([1.0 if rec.get("ml_knowledge") == "high" else 0.0
                                      for rec, _ in rows])))
    cols.append(("shapley_yes", np.array([1.0 if rec.get("shapley_familiarity") == "yes" else 0.0
                                          for rec, _ in rows])))
    cols.append(("domain_yes", np.array([1.0 if rec.get("domain_knowledge") == "yes" else 0.0
                                         for rec, _ in rows])))
    dummies([rec["analyst_id"] for rec, _ in rows], "analyst_", drop_first=True)

    # Greedy pruning in declaration order via Gram-Schmidt: constant or
    # collinear columns (analyst traits are inside the span of the identity
    # dummies, and vice versa) never reach the fits.
    kept_names: list[str] = []
    kept_cols: list[np.ndarray] = []
    dropped: list[str] = []
    Q = np.empty((n, len(cols)))
    k = 0
    for name, c in cols:
        if name != "intercept" and c.std() < 1e-12:
            dropped.append(name)
            continue
        r = c.astype(np.float64).copy()
        for _ in range(2):  # re-orthogonalize for stability
            if k:
                r -= Q[:, :k] @ (Q[:, :k].T @ r)
        nrm = np.linalg.norm(r)
        if nrm > 1e-8 * max(np.linalg.norm(c), 1.0):
            Q[:, k] = r / nrm
            k += 1
            kept_names.append(name)
            kept_cols.append(c)
        else:
            dropped.append(name)
    X = np.column_stack(kept_cols)
    return DesignMatrix(outcome, y, X, kept_names, dropped)


# ---- logistic ---------------------------------------------------------------


def _logistic_loglik_grad(beta, X, y):
    z = X @ beta
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    p = expit(z)
    return ll, X.T @ (y - p)


def fit_logistic_mle(D: DesignMatrix, max_iter: int = 100, tol: float = 1e-8
                     ) -> tuple[np.ndarray, np.ndarray, dict]:
    """Newton MLE with step halving; every accepted step increases the
    log-likelihood. Non-convergence and complete separation (fitted
    probabilities saturating onto the labels, where no finite MLE exists)
    both trigger a flagged ridge refit. Covariance is the inverse
    observed information.
    """
    X, y = D.X, D.y
    n, p = X.shape

    # The gradient scales with n while float64 resolution of the likelihood
    # does not, so the convergence bar must grow with n or step halving
    # stalls one ulp short of it.
    gtol = max(tol, 1e-9 * n)

    def newton(alpha: float):
        beta = np.zeros(p)
        ll, g = _logistic_loglik_grad(beta, X, y)
        ll -= 0.5 * alpha * beta @ beta
        converged = False
        for _ in range(max_iter):
            g_pen = g - alpha * beta
            if np.max(np.abs(g_pen)) < gtol:
                converged = True
                break
            prob = expit(X @ beta)
            W = prob * (1 - prob)
            H = X.T @ (X * W[:, None]) + alpha * np.eye(p)
            try:
                step = np.linalg.solve(H, g_pen)
            except np.linalg.LinAlgError:
                return beta, ll, False
            t = 1.0
            improved = False
            for _ in range(40):
                cand = beta + t * step
                ll_new, g_new = _logistic_loglik_grad(cand, X, y)
                ll_new -= 0.5 * alpha * cand @ cand
                if ll_new > ll:
                    beta, ll, g = cand, ll_new, g_new
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
        return beta, ll, converged

    beta, ll, converged = newton(0.0)
    prob = expit(X @ beta)
    separated = bool(np.all(np.abs(y - prob) < 1e-6))
    if separated:
        converged = False
    ridge = False
    if not converged:
        ridge = True
        alpha = max(1e-4 * n / 1000.0, 1e-2 if separated else 0.0, 1e-4)
        beta, ll, _ = newton(alpha)
        prob = expit(X @ beta)
    W = np.maximum(prob * (1 - prob), 1e-12)
    info = X.T @ (X * W[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(info + 1e-8 * np.eye(p))
        ridge = True
    return beta, cov, {"converged": converged, "ridge": ridge,
                       "separated": separated, "loglik": ll}


# ---- ordinal (proportional odds) --------------------------------------------


def _ordinal_pieces(params, X, y, n_levels, want_hessian=False):
    """Log-likelihood, gradient, and (optionally) analytic Hessian of the
    proportional-odds model P(y <= k) = sigmoid(theta_k - x.beta).

    Each observation contributes through its two cut arguments
    A = theta_{y} - eta (upper, +inf at the top level) and
    B = theta_{y-1} - eta (lower, -inf at the bottom), with
    P = F(A) - F(B). All second derivatives follow from f = F' and
    f' = f (1 - 2F) of the logistic CDF.
    """
    K = n_levels - 1
    theta, beta = params[:K], params[K:]
    eta = X @ beta
    yi = y.astype(np.int64)
    n, p = X.shape

    A = np.where(yi < K, theta[np.minimum(yi, K - 1)] - eta, np.inf)
    B = np.where(yi > 0, theta[np.maximum(yi - 1, 0)] - eta, -np.inf)
    FA, FB = expit(A), expit(B)
    fA = np.where(np.isfinite(A), FA * (1 - FA), 0.0)
    fB = np.where(np.isfinite(B), FB * (1 - FB), 0.0)
    P = np.maximum(FA - FB, 1e-300)
    ll = float(np.log(P).sum())

    gA = fA / P          # d ll / dA per observation
    gB = -fB / P         # d ll / dB
    grad = np.zeros_like(params)
    up, lo = yi < K, yi > 0
    np.add.at(grad, yi[up], gA[up])
    np.add.at(grad, yi[lo] - 1, gB[lo])
    grad[K:] = X.T @ (-(gA + gB))

    if not want_hessian:
        return ll, grad, None

    dfA = np.where(np.isfinite(A), fA * (1 - 2 * FA), 0.0)
    dfB = np.where(np.isfinite(B), fB * (1 - 2 * FB), 0.0)
    HAA = dfA / P - gA * gA
    HBB = -dfB / P - gB * gB
    HAB = fA * fB / (P * P)

    m = K + p
    H = np.zeros((m, m))
    H[K:, K:] = X.T @ (X * (HAA + HBB + 2 * HAB)[:, None])
    tt = np.zeros((K, K))
    np.add.at(tt, (yi[up], yi[up]), HAA[up])
    np.add.at(tt, (yi[lo] - 1, yi[lo] - 1), HBB[lo])
    both = up & lo
    np.add.at(tt, (yi[both], yi[both] - 1), HAB[both])
    np.add.at(tt, (yi[both] - 1, yi[both]), HAB[both])
    H[:K, :K] = tt
    coef_up = HAA + HAB   # weight on e_{y} x' (HAB vanishes when B is -inf)
    coef_lo = HBB + HAB
    tb = np.zeros((K, p))
    for k in range(K):
        sel = up & (yi == k)
        if sel.any():
            tb[k] -= coef_up[sel] @ X[sel]
        sel = lo & (yi == k + 1)
        if sel.any():
            tb[k] -= coef_lo[sel] @ X[sel]
    H[:K, K:] = tb
    H[K:, :K] = tb.T
    return ll, grad, H


def fit_ordinal_po(D: DesignMatrix, max_iter: int = 100, tol: float = 1e-8
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Newton MLE of the three-level proportional-odds model.

    Steps are halved until the log-likelihood increases and until the
    thresholds stay strictly increasing. Returns (beta, thresholds,
    cov_beta, diagnostics); the covariance is the inverse observed
    information restricted to the coefficient block.
    """
    if len(np.unique(D.y)) < 2:
        raise SchemaError("ordinal fit needs at least 2 observed levels")
    n_levels = 3
    keep = [i for i, c in enumerate(D.columns) if c != "intercept"]
    X = D.X[:, keep]
    y = D.y
    K = n_levels - 1
    p = X.shape[1]

    # Thresholds start at the marginal cumulative logits, strictly ordered.
    cum = np.clip(np.cumsum(np.bincount(y.astype(np.int64), minlength=n_levels))[:K]
                  / len(y), 1e-3, 1 - 1e-3)
    theta0 = np.log(cum / (1 - cum))
    theta0 = np.maximum.accumulate(theta0 + 1e-6 * np.arange(K))
    theta0[1:] = np.maximum(theta0[1:], theta0[:-1] + 1e-3)
    params = np.concatenate([theta0, np.zeros(p)])

    ll, g, H = _ordinal_pieces(params, X, y, n_levels, want_hessian=True)
    converged = False
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol * max(1.0, len(y) / 100):
            converged = True
            break
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(-H + 1e-8 * np.eye(len(g)), g)
        t = 1.0
        improved = False
        for _ in range(40):
            cand = params + t * step
            if np.all(np.diff(cand[:K]) > 1e-9):
                ll_new, g_new, H_new = _ordinal_pieces(cand, X, y, n_levels,
                                                       want_hessian=True)
                if ll_new > ll:
                    params, ll, g, H = cand, ll_new, g_new, H_new
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break

    try:
        cov_all = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        cov_all = np.linalg.inv(-H + 1e-8 * np.eye(len(params)))
    beta = params[K:]
    cov_beta = cov_all[K:, K:]
    diag = {"converged": bool(converged), "loglik": ll,
            "columns": [D.columns[i] for i in keep]}
    return beta, params[:K], cov_beta, diag


# ---- quantile regression on log(1+t) ----------------------------------------


def _pinball(r: np.ndarray, q: float) -> float:
    return float(np.mean(np.where(r >= 0, q * r, (q - 1) * r)))


def fit_quantile_logtime(D: DesignMatrix, quantiles=TIME_QUANTILES,
                         n_iter: int = 4000, seed: int = 0
                         ) -> dict[float, np.ndarray]:
    """Pinball-loss fits by averaged subgradient descent from an OLS start.

    Returns per-quantile coefficient vectors aligned with D.columns.
    """
    X, y = D.X, D.y
    n, p = X.shape
    beta_ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    col_scale = np.maximum(np.sqrt((X ** 2).mean(axis=0)), 1e-9)
    out: dict[float, np.ndarray] = {}
    for q in quantiles:
        beta = beta_ols.copy()
        acc = np.zeros_like(beta)
        n_acc = 0
        base_lr = 0.5 * y.std() if y.std() > 0 else 0.1
        for t in range(1, n_iter + 1):
            r = y - X @ beta
            psi = np.where(r > 0, q, q - 1.0)
            g = -(X.T @ psi) / n
            beta = beta - (base_lr / np.sqrt(t)) * g / col_scale
            if t > n_iter // 2:
                acc += beta
                n_acc += 1
        out[q] = acc / max(n_acc, 1)
    return out


def quantile_bootstrap_se(D: DesignMatrix, quantiles=TIME_QUANTILES, n_boot: int = 200,
                          seed: int = 0, n_iter: int = 1500) -> dict[float, np.ndarray]:
    """Case-resampling bootstrap SEs for the quantile coefficients."""
    n = len(D.y)
    draws: dict[float, list[np.ndarray]] = {q: [] for q in quantiles}
    for b in range(n_boot):
        rng = substream(seed, "time-boot", b)
        idx = rng.integers(0, n, size=n)
        Db = DesignMatrix(D.outcome, D.y[idx], D.X[idx], D.columns)
        fit = fit_quantile_logtime(Db, quantiles, n_iter=n_iter, seed=seed)
        for q in quantiles:
            draws[q].append(fit[q])
    return {q: np.std(np.stack(v), axis=0, ddof=1) for q, v in draws.items()}


# ---- effect reporting --------------------------------------------------------


def delta_method_ci(name: str, beta: float, se_beta: float, scale: str = "odds_ratio"
                    ) -> EffectEstimate:
    """Effect exp(beta) with SE exp(beta)*SE(beta) and CI exp(beta +- 1.96 SE)."""
    # A degenerate fit can put the upper bound past float range; the
    # resulting inf is honest, so only the warning is suppressed.
    with np.errstate(over="ignore"):
        eff = float(np.exp(beta))
        lo = float(np.exp(beta - 1.96 * se_beta))
        hi = float(np.exp(beta + 1.96 * se_beta))
    return EffectEstimate(name, eff, lo, hi, eff * float(se_beta), scale)


def effects_from_fit(columns: list[str], beta: np.ndarray, cov: np.ndarray,
                     scale: str, include: tuple[str, ...] = ("arm_",)) -> list[EffectEstimate]:
    out = []
    for i, name in enumerate(columns):
        if name == "intercept":
            continue
        if include and not any(name.startswith(pfx) for pfx in include):
            continue
        out.append(delta_method_ci(name, float(beta[i]), float(np.sqrt(max(cov[i, i], 0.0))),
                                   scale))
    return out


# ---- alignment regression ----------------------------------------------------


@dataclass(frozen=True)
class AlignmentRegressionSpec:
    response: str                       # "clarity" | "confidence"
    metrics: tuple[str, ...] = ("sparsity", "deletion_auc", "insertion_auc",
                                "sensitivity", "contrastivity")


def alignment_regression(records: list[dict], metrics_per_case: dict[str, dict[str, float]],
                         spec: AlignmentRegressionSpec) -> list[EffectEstimate]:
    """Regress perceived clarity/confidence on standardized per-case metrics
    plus the control set (arm dummies excluded: the metrics describe the
    served explanation, which is what the arms vary)."""
    if spec.response not in ("clarity", "confidence"):
        raise SchemaError("alignment response must be clarity or confidence")
    if not spec.metrics:
        raise SchemaError("alignment needs at least one metric predictor")
    usable = [r for r in records
              if r["arm"] != "none"
              and ((r["case_id"], r["arm"]) in metrics_per_case
                   or r["case_id"] in metrics_per_case)]
    if not usable:
        raise SchemaError("no records join against the per-case metrics")

    D = build_design_matrix(usable, spec.response)
    # The design matrix drops rows for clarity (none rows already excluded
    # above) so rebuild the metric matrix aligned with what it kept.
    rows = sorted(usable, key=lambda r: (r["analyst_id"], r["submitted_at"],
                                         r.get("record_index", 0)))
    if spec.response == "clarity":
        rows = [r for r in rows if r["arm"] != "none" and r["clarity"] != "not_applicable"]
    M = np.empty((len(rows), len(spec.metrics)))
    for i, r in enumerate(rows):
        per = metrics_per_case.get((r["case_id"], r["arm"]), metrics_per_case.get(r["case_id"]))
        for j, m in enumerate(spec.metrics):
            if m not in per:
                raise SchemaError(f"metric {m!r} missing for case {r['case_id']!r}")
            M[i, j] = float(per[m])
    mu, sd = M.mean(axis=0), M.std(axis=0)
    if np.any(sd < 1e-12):
        flat = [m for j, m in enumerate(spec.metrics) if sd[j] < 1e-12]
        raise SchemaError(f"metrics with zero variance cannot be standardized: {flat}")
    M = (M - mu) / sd

    keep = [i for i, c in enumerate(D.columns) if not c.startswith("arm_")]
    X = np.hstack([D.X[:, keep], M])
    columns = [D.columns[i] for i in keep] + [f"metric_{m}" for m in spec.metrics]
    D2 = DesignMatrix(spec.response, D.y, X, columns)
    if spec.response == "clarity":
        beta, cov, _ = fit_logistic_mle(D2)
        return effects_from_fit(columns, beta, cov, "odds_ratio", include=("metric_",))
    beta, _, cov, diag = fit_ordinal_po(D2)
    cols = diag["columns"]
    return effects_from_fit(cols, beta, cov, "odds_ratio", include=("metric_",))


# ---- Table-style report -------------------------------------------------------


@dataclass
class AnalysisReport:
    effects: dict[str, list[EffectEstimate]]   # outcome -> effects
    time_quantile_effects: dict[float, list[EffectEstimate]]
    diagnostics: dict

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": "v1",
            "effects": {k: [e.as_dict() for e in v] for k, v in self.effects.items()},
            "time": {str(q): [e.as_dict() for e in v]
                     for q, v in self.time_quantile_effects.items()},
            "diagnostics": self.diagnostics,
        }, sort_keys=True, indent=1)

    def to_csv(self) -> str:
        names: list[str] = []
        for effs in self.effects.values():
            for e in effs:
                if e.name not in names:
                    names.append(e.name)
        for effs in self.time_quantile_effects.values():
            for e in effs:
                if e.name not in names:
                    names.append(e.name)
        header = ["predictor"]
        for q in TIME_QUANTILES:
            header.append(f"time_p{str(q * 100).rstrip('0').rstrip('.')}")
        header += ["accuracy", "clarity", "confidence"]
        lines = [",".join(header)]

        def fmt(effs: list[EffectEstimate], name: str) -> str:
            for e in effs:
                if e.name == name:
                    return f"{e.effect:.3f} [{e.ci_low:.3f}; {e.ci_high:.3f}]"
            return ""

        for name in names:
            row = [name]
            for q in TIME_QUANTILES:
                row.append(fmt(self.time_quantile_effects.get(q, []), name))
            row.append(fmt(self.effects.get("accuracy", []), name))
            row.append(fmt(self.effects.get("clarity", []), name))
            row.append(fmt(self.effects.get("confidence", []), name))
            lines.append(",".join('"' + c + '"' if "," in c else c for c in row))
        return "\n".join(lines) + "\n"


def analyze_logs(records: list[dict], n_time_boot: int = 200, seed: int = 0,
                 include: tuple[str, ...] = ("arm_",)) -> AnalysisReport:
    """Fit all four outcome models and report delta-method effects."""
    effects: dict[str, list[EffectEstimate]] = {}
    diagnostics: dict = {}

    D_acc = build_design_matrix(records, "accuracy")
    beta, cov, diag = fit_logistic_mle(D_acc)
    effects["accuracy"] = effects_from_fit(D_acc.columns, beta, cov, "odds_ratio", include)
    diagnostics["accuracy"] = {**diag, "dropped": D_acc.dropped, "n": len(D_acc.y)}

    D_cla = build_design_matrix(records, "clarity")
    beta, cov, diag = fit_logistic_mle(D_cla)
    effects["clarity"] = effects_from_fit(D_cla.columns, beta, cov, "odds_ratio", include)
    # Sum-to-zero coding leaves the last arm implicit: its effect is the
    # negative sum of the coded ones, with variance 1' Cov 1.
    arm_ix = [i for i, c in enumerate(D_cla.columns) if c.startswith("arm_")]
    if arm_ix:
        ones = np.ones(len(arm_ix))
        b_last = -float(beta[arm_ix].sum())
        var_last = float(ones @ cov[np.ix_(arm_ix, arm_ix)] @ ones)
        effects["clarity"].append(delta_method_ci(
            f"arm_{sorted(EXPLANATION_ARMS)[-1]}", b_last, float(np.sqrt(max(var_last, 0.0)))))
    diagnostics["clarity"] = {**diag, "dropped": D_cla.dropped, "n": len(D_cla.y)}

    D_con = build_design_matrix(records, "confidence")
    beta, _, cov_b, diag = fit_ordinal_po(D_con)
    effects["confidence"] = effects_from_fit(diag["columns"], beta, cov_b, "odds_ratio", include)
    diagnostics["confidence"] = {**diag, "dropped": D_con.dropped, "n": len(D_con.y)}
    diagnostics["confidence"].pop("columns", None)

    D_time = build_design_matrix(records, "time")
    fits = fit_quantile_logtime(D_time)
    ses = quantile_bootstrap_se(D_time, n_boot=n_time_boot, seed=seed)
    time_effects: dict[float, list[EffectEstimate]] = {}
    for q in TIME_QUANTILES:
        effs = []
        for i, name in enumerate(D_time.columns):
            if name == "intercept" or (include and not any(name.startswith(p) for p in include)):
                continue
            effs.append(delta_method_ci(name, float(fits[q][i]), float(ses[q][i]),
                                        "time_multiplier"))
        time_effects[q] = effs
    diagnostics["time"] = {"dropped": D_time.dropped, "n": len(D_time.y),
                           "se_method": "case bootstrap", "n_boot": n_time_boot}

    return AnalysisReport(effects, time_effects, diagnostics)
