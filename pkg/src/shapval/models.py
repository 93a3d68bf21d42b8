"""Predictive models scored as P(y=1|x), plus entropy and AUC helpers.

Any object with a vectorized ``score(X) -> (n,)`` method works as a
predictor downstream; the two concrete models here also persist to JSON
checkpoints whose sha256 serves as a model fingerprint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata


@runtime_checkable
class Predictor(Protocol):
    def score(self, X: np.ndarray) -> np.ndarray:
        """Probability of the positive class for each row of X."""
        ...


def score_one(model: Predictor, x: np.ndarray) -> float:
    return float(model.score(np.asarray(x, dtype=np.float64)[None, :])[0])


def predictive_entropy(p) -> np.ndarray | float:
    """Binary entropy in nats; 0 at p in {0, 1}."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < -1e-12) | (p > 1 + 1e-12)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    out = np.zeros_like(p)
    inner = (p > 0) & (p < 1)
    q = p[inner]
    out[inner] = -q * np.log(q) - (1 - q) * np.log(1 - q)
    return float(out) if out.ndim == 0 else out


def roc_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC with average-rank tie handling."""
    y = np.asarray(y)
    pos = y == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes")
    r = rankdata(scores)
    return float((r[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


@dataclass(frozen=True)
class LogisticConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_iter: int = 100
    balanced: bool = True
    fit_intercept: bool = True


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    feature_names: list[str] = field(default_factory=list)
    converged: bool = True
    n_iter: int = 0

    def margin(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.intercept

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.margin(np.asarray(X, dtype=np.float64)))

    def to_json(self) -> str:
        return json.dumps({
            "format": "shapval-logistic-v1",
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "feature_names": self.feature_names,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        obj = json.loads(text)
        if obj.get("format") != "shapval-logistic-v1":
            raise ValueError(f"unexpected checkpoint format {obj.get('format')!r}")
        return cls(np.asarray(obj["weights"], dtype=np.float64), float(obj["intercept"]),
                   list(obj["feature_names"]), bool(obj["converged"]), int(obj["n_iter"]))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def class_balance_weights(y: np.ndarray) -> np.ndarray:
    """n / (2 * n_class) per sample; uniform if only one class is present."""
    y = np.asarray(y)
    n = len(y)
    n1 = int((y == 1).sum())
    if n1 == 0 or n1 == n:
        return np.ones(n)
    w = np.where(y == 1, n / (2.0 * n1), n / (2.0 * (n - n1)))
    return w


def penalized_nll_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                           sample_weight: np.ndarray, alpha: float,
                           fit_intercept: bool) -> tuple[float, np.ndarray]:
    """Weighted logistic negative log-likelihood with L2 on the weights.

    ``params`` is the weight vector, with the intercept appended when
    ``fit_intercept``. The intercept is never penalized.
    """
    d = X.shape[1]
    w = params[:d]
    b = params[d] if fit_intercept else 0.0
    z = X @ w + b
    p = expit(z)
    # log(1 + exp(-|z|)) form keeps the loss finite for extreme margins.
    nll = sample_weight * (np.logaddexp(0.0, -np.abs(z)) + np.where(y == 1, np.maximum(-z, 0), np.maximum(z, 0)))
    loss = float(nll.sum() + 0.5 * alpha * (w @ w))
    r = sample_weight * (p - y)
    gw = X.T @ r + alpha * w
    if fit_intercept:
        return loss, np.concatenate([gw, [r.sum()]])
    return loss, gw


def train_logistic(X: np.ndarray, y: np.ndarray, config: LogisticConfig = LogisticConfig(),
                   feature_names: list[str] | None = None) -> LogisticModel:
    """Fit by damped Newton (IRLS): full steps, halved until the loss drops."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    alpha = 1.0 / config.C
    tol = config.tol if config.tol > 0 else 1e-4
    sw = class_balance_weights(y) if config.balanced else np.ones(n)

    k = d + (1 if config.fit_intercept else 0)
    params = np.zeros(k)
    loss, grad = penalized_nll_and_grad(params, X, y, sw, alpha, config.fit_intercept)
    it = 0
    for it in range(1, config.max_iter + 1):
        if np.max(np.abs(grad)) <= tol:
            break
        w = params[:d]
        b = params[d] if config.fit_intercept else 0.0
        p = expit(X @ w + b)
        h = sw * p * (1 - p)
        H = np.empty((k, k))
        Xh = X * h[:, None]
        H[:d, :d] = X.T @ Xh + alpha * np.eye(d)
        if config.fit_intercept:
            H[:d, d] = Xh.sum(axis=0)
            H[d, :d] = H[:d, d]
            H[d, d] = h.sum()
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-8 * np.eye(k), grad)
        t = 1.0
        for _ in range(30):
            cand = params - t * step
            new_loss, new_grad = penalized_nll_and_grad(cand, X, y, sw, alpha, config.fit_intercept)
            if new_loss <= loss:
                params, loss, grad = cand, new_loss, new_grad
                break
            t *= 0.5
        else:
            break  # no direction of descent left at this scale
    converged = bool(np.max(np.abs(grad)) <= tol)
    w = params[:d]
    b = float(params[d]) if config.fit_intercept else 0.0
    return LogisticModel(w, b, feature_names or [], converged, it)
