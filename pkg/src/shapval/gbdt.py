"""Gradient boosted decision trees for binary classification.

Depth-limited regression trees fit to first and second order gradients of
the log-loss, exact greedy split search over sorted feature values, Newton
leaf values, optional row subsampling and validation early stopping.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .seeding import substream

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GBDTConfig:
    learning_rate: float = 0.1
    n_estimators: int = 100
    max_depth: int = 3
    min_child_samples: int = 20
    subsample: float = 1.0
    feature_frac: float = 1.0
    reg_lambda: float = 1.0
    early_stopping: int = 0
    seed: int = 0


@dataclass
class Tree:
    """Flat node arrays; leaves self-loop so apply() can run a fixed depth."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        n = len(X)
        node = np.zeros(n, dtype=np.int64)
        depth = 0
        while (self.feature[node] >= 0).any():
            f = self.feature[node]
            col = np.maximum(f, 0)
            go_left = X[np.arange(n), col] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(f >= 0, nxt, node)
            depth += 1
            if depth > 64:
                raise RuntimeError("tree routing did not terminate")
        return self.value[node]


class _TreeBuilder:
    def __init__(self, X, g, h, cfg: GBDTConfig, feat_subset):
        self.X, self.g, self.h, self.cfg = X, g, h, cfg
        self.feat_subset = feat_subset
        self.nodes: list[list] = []  # [feature, threshold, left, right, value]

    def build(self, idx: np.ndarray) -> Tree:
        self._grow(idx, 0)
        a = np.array
        n = self.nodes
        return Tree(a([r[0] for r in n], dtype=np.int64), a([r[1] for r in n]),
                    a([r[2] for r in n], dtype=np.int64), a([r[3] for r in n], dtype=np.int64),
                    a([r[4] for r in n]))

    def _leaf(self, idx) -> int:
        gs, hs = self.g[idx].sum(), self.h[idx].sum()
        i = len(self.nodes)
        self.nodes.append([-1, 0.0, i, i, -gs / (hs + self.cfg.reg_lambda)])
        return i

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        cfg = self.cfg
        if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_child_samples:
            return self._leaf(idx)
        best = self._best_split(idx)
        if best is None:
            return self._leaf(idx)
        j, thr, left_mask = best
        i = len(self.nodes)
        self.nodes.append([j, thr, -1, -1, 0.0])
        self.nodes[i][2] = self._grow(idx[left_mask], depth + 1)
        self.nodes[i][3] = self._grow(idx[~left_mask], depth + 1)
        return i

    def _best_split(self, idx):
        lam, mcs = self.cfg.reg_lambda, self.cfg.min_child_samples
        G, H = self.g[idx].sum(), self.h[idx].sum()
        parent = G * G / (H + lam)
        best_gain, best = _MIN_GAIN, None
        for j in self.feat_subset:
            xs = self.X[idx, j]
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            cg = np.cumsum(self.g[idx][order])
            ch = np.cumsum(self.h[idx][order])
            n = len(idx)
            pos = np.arange(mcs - 1, n - mcs)
            if pos.size == 0:
                continue
            pos = pos[xs_s[pos] < xs_s[pos + 1]]
            if pos.size == 0:
                continue
            GL, HL = cg[pos], ch[pos]
            gain = 0.5 * (GL * GL / (HL + lam) + (G - GL) ** 2 / (H - HL + lam) - parent)
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                thr = 0.5 * (xs_s[pos[k]] + xs_s[pos[k] + 1])
                best_gain, best = float(gain[k]), (int(j), thr, self.X[idx, j] <= thr)
        return best


def _log_loss(y: np.ndarray, margin: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass
class TreeEnsemble:
    base_margin: float
    learning_rate: float
    trees: list[Tree] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    train_loss_history: list[float] = field(default_factory=list)
    best_iteration: int | None = None

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base_margin)
        for t in self.trees:
            out += self.learning_rate * t.apply(X)
        return out

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.margin(X))

    def to_json(self) -> str:
        return json.dumps({
            "format": "shapval-gbdt-v1",
            "base_margin": self.base_margin,
            "learning_rate": self.learning_rate,
            "feature_names": self.feature_names,
            "best_iteration": self.best_iteration,
            "trees": [{
                "feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                "left": t.left.tolist(), "right": t.right.tolist(), "value": t.value.tolist(),
            } for t in self.trees],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        obj = json.loads(text)
        if obj.get("format") != "shapval-gbdt-v1":
            raise ValueError(f"unexpected checkpoint format {obj.get('format')!r}")
        trees = [Tree(np.asarray(t["feature"], dtype=np.int64), np.asarray(t["threshold"]),
                      np.asarray(t["left"], dtype=np.int64), np.asarray(t["right"], dtype=np.int64),
                      np.asarray(t["value"])) for t in obj["trees"]]
        return cls(float(obj["base_margin"]), float(obj["learning_rate"]), trees,
                   list(obj["feature_names"]), [], obj["best_iteration"])

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def train_gbdt(X: np.ndarray, y: np.ndarray, config: GBDTConfig = GBDTConfig(),
               X_val: np.ndarray | None = None, y_val: np.ndarray | None = None,
               feature_names: list[str] | None = None) -> TreeEnsemble:
    """Boost with log-loss gradients; early-stops on validation loss if given."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    prev = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    ens = TreeEnsemble(float(np.log(prev / (1 - prev))), config.learning_rate,
                       feature_names=feature_names or [])
    margin = np.full(n, ens.base_margin)
    val_margin = None if X_val is None else np.full(len(X_val), ens.base_margin)
    best_val, since_best = np.inf, 0

    n_feat = max(1, int(round(config.feature_frac * d)))
    n_rows = max(2 * config.min_child_samples, int(round(config.subsample * n)))
    n_rows = min(n_rows, n)

    for m in range(config.n_estimators):
        p = expit(margin)
        g = p - y
        h = np.maximum(p * (1 - p), 1e-12)
        rng = substream(config.seed, "gbdt-round", m)
        idx = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        feats = np.sort(rng.choice(d, size=n_feat, replace=False)) if n_feat < d else np.arange(d)
        tree = _TreeBuilder(X, g, h, config, feats).build(idx)
        ens.trees.append(tree)
        margin += config.learning_rate * tree.apply(X)
        ens.train_loss_history.append(_log_loss(y, margin))
        if X_val is not None:
            val_margin += config.learning_rate * tree.apply(np.asarray(X_val, dtype=np.float64))
            vloss = _log_loss(np.asarray(y_val, dtype=np.float64), val_margin)
            if vloss < best_val - 1e-12:
                best_val, since_best = vloss, 0
                ens.best_iteration = m
            else:
                since_best += 1
                if config.early_stopping and since_best >= config.early_stopping:
                    break
    if ens.best_iteration is not None:
        ens.trees = ens.trees[:ens.best_iteration + 1]
        ens.train_loss_history = ens.train_loss_history[:ens.best_iteration + 1]
    return ens
