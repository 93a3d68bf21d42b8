"""Amortized attribution networks.

A feed-forward net maps one instance to its full attribution vector in a
single pass. Training regresses the additive surrogate
g(S) = v(empty) + sum_{i in S} phi_i onto coalition values v_x(S) at
kernel-distributed coalitions, with a soft penalty holding the efficiency
identity; at inference the residual gap is spread evenly across features
so the identity binds exactly.

The network is plain numpy with hand-written backprop: categorical
embeddings feeding dense blocks of affine, layer norm, leaky ReLU, and
dropout. Training runs in two phases, Adam under a linear warmup and then
SGD with momentum under cosine decay.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TrainingDivergedError, UnknownCategoryError
from .models import Predictor, score_one
from .oracle import AttributionVector, sample_coalitions
from .seeding import substream
from .valuefunctions import BackgroundSet, ValueFunctionSpec, build_background

_LN_EPS = 1e-5


@dataclass(frozen=True)
class Arch:
    """Network shape: feature layout, embedding table sizes, hidden widths."""

    d: int
    numeric_idx: tuple[int, ...]
    cat_idx: tuple[int, ...]
    cat_levels: tuple[int, ...]
    emb_dims: tuple[int, ...]
    hidden: tuple[int, ...] = (128, 128, 128)
    dropout: float = 0.1
    leaky_slope: float = 0.01

    @property
    def input_dim(self) -> int:
        return len(self.numeric_idx) + sum(self.emb_dims)


def make_arch(d: int, cat_levels: dict[int, int] | None = None,
              hidden: tuple[int, ...] = (128, 128, 128), dropout: float = 0.1) -> Arch:
    cat_levels = cat_levels or {}
    cat_idx = tuple(sorted(cat_levels))
    numeric_idx = tuple(j for j in range(d) if j not in cat_levels)
    levels = tuple(int(cat_levels[j]) for j in cat_idx)
    emb_dims = tuple(min(8, max(2, (L + 1) // 2)) for L in levels)
    return Arch(d, numeric_idx, cat_idx, levels, emb_dims, tuple(hidden), dropout)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    batch_size: int = 64
    masks_per_input: int = 4
    efficiency_weight: float = 0.1
    momentum: float = 0.9
    adam_frac: float = 0.5
    warmup_frac: float = 0.05
    seed: int = 0
    divergence_factor: float = 10.0
    divergence_patience: int = 10


class Amortizer:
    """The network plus the provenance of what it was trained against."""

    def __init__(self, arch: Arch, params: dict[str, np.ndarray],
                 spec_fingerprint: str = "", model_fingerprint: str = "",
                 train_meta: dict | None = None):
        self.arch = arch
        self.params = params
        self.spec_fingerprint = spec_fingerprint
        self.model_fingerprint = model_fingerprint
        self.train_meta = train_meta or {}

    # ---- forward / backward -------------------------------------------

    def _input(self, X: np.ndarray) -> np.ndarray:
        a = self.arch
        parts = [X[:, a.numeric_idx]] if a.numeric_idx else []
        for k, j in enumerate(a.cat_idx):
            codes = np.rint(X[:, j]).astype(np.int64)
            if codes.min() < 0 or codes.max() >= a.cat_levels[k]:
                raise UnknownCategoryError(
                    f"feature index {j}: code outside the fitted range [0, {a.cat_levels[k]})")
            parts.append(self.params[f"emb{k}"][codes])
        return np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]

    def forward(self, X: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None, cache: list | None = None) -> np.ndarray:
        a = self.arch
        X = np.asarray(X, dtype=np.float64)
        Z = self._input(X)
        if cache is not None:
            cache.append(("input", X, Z))
        for l in range(len(a.hidden)):
            A = Z @ self.params[f"W{l}"] + self.params[f"b{l}"]
            mu = A.mean(axis=1, keepdims=True)
            sig = np.sqrt(A.var(axis=1, keepdims=True) + _LN_EPS)
            Y = (A - mu) / sig
            O = self.params[f"g{l}"] * Y + self.params[f"c{l}"]
            R = np.where(O > 0, O, a.leaky_slope * O)
            if train and a.dropout > 0:
                keep = 1.0 - a.dropout
                drop = (rng.uniform(size=R.shape) < keep) / keep
            else:
                drop = None
            Znew = R * drop if drop is not None else R
            if cache is not None:
                cache.append(("block", Z, Y, sig, O, drop))
            Z = Znew
        out = Z @ self.params["Wh"] + self.params["bh"]
        if cache is not None:
            cache.append(("head", Z))
        return out

    def backward(self, cache: list, dout: np.ndarray) -> dict[str, np.ndarray]:
        a = self.arch
        grads: dict[str, np.ndarray] = {}
        kind, Zh = cache[-1]
        assert kind == "head"
        grads["Wh"] = Zh.T @ dout
        grads["bh"] = dout.sum(axis=0)
        dZ = dout @ self.params["Wh"].T
        for l in range(len(a.hidden) - 1, -1, -1):
            kind, Zin, Y, sig, O, drop = cache[1 + l]
            assert kind == "block"
            if drop is not None:
                dZ = dZ * drop
            dO = dZ * np.where(O > 0, 1.0, a.leaky_slope)
            grads[f"g{l}"] = (dO * Y).sum(axis=0)
            grads[f"c{l}"] = dO.sum(axis=0)
            dY = dO * self.params[f"g{l}"]
            dA = (dY - dY.mean(axis=1, keepdims=True)
                  - Y * (dY * Y).mean(axis=1, keepdims=True)) / sig
            grads[f"W{l}"] = Zin.T @ dA
            grads[f"b{l}"] = dA.sum(axis=0)
            dZ = dA @ self.params[f"W{l}"].T
        kind, X, _ = cache[0]
        assert kind == "input"
        n_num = len(a.numeric_idx)
        for k, j in enumerate(a.cat_idx):
            lo = n_num + sum(a.emb_dims[:k])
            gslice = dZ[:, lo:lo + a.emb_dims[k]]
            codes = np.rint(X[:, j]).astype(np.int64)
            ge = np.zeros_like(self.params[f"emb{k}"])
            np.add.at(ge, codes, gslice)
            grads[f"emb{k}"] = ge
        return grads

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(np.asarray(X, dtype=np.float64)))

    # ---- persistence ---------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "format": "shapval-amortizer-v1",
            "arch": asdict(self.arch),
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
            "spec_fingerprint": self.spec_fingerprint,
            "model_fingerprint": self.model_fingerprint,
            "train_meta": self.train_meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Amortizer":
        obj = json.loads(text)
        if obj.get("format") != "shapval-amortizer-v1":
            raise ValueError(f"unexpected checkpoint format {obj.get('format')!r}")
        raw = obj["arch"]
        for key in ("numeric_idx", "cat_idx", "cat_levels", "emb_dims", "hidden"):
            raw[key] = tuple(raw[key])
        arch = Arch(**raw)
        params = {k: np.asarray(v, dtype=np.float64) for k, v in obj["params"].items()}
        return cls(arch, params, obj["spec_fingerprint"], obj["model_fingerprint"],
                   obj["train_meta"])

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def init_amortizer(arch: Arch, seed: int = 0) -> Amortizer:
    rng = substream(seed, "amortizer-init")
    params: dict[str, np.ndarray] = {}
    for k, (L, e) in enumerate(zip(arch.cat_levels, arch.emb_dims)):
        params[f"emb{k}"] = 0.1 * rng.standard_normal((L, e))
    fan_in = arch.input_dim
    for l, width in enumerate(arch.hidden):
        params[f"W{l}"] = rng.standard_normal((fan_in, width)) * math.sqrt(2.0 / fan_in)
        params[f"b{l}"] = np.zeros(width)
        params[f"g{l}"] = np.ones(width)
        params[f"c{l}"] = np.zeros(width)
        fan_in = width
    params["Wh"] = rng.standard_normal((fan_in, arch.d)) * math.sqrt(1.0 / fan_in)
    params["bh"] = np.zeros(arch.d)
    return Amortizer(arch, params)


def surrogate_loss(phi: np.ndarray, masks: np.ndarray, v: np.ndarray, v0: np.ndarray,
                   fx: np.ndarray, efficiency_weight: float,
                   weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to phi.

    phi (B,d); masks (B,M,d); v (B,M) coalition targets; v0, fx (B,).
    Mask weights default to uniform because the sampler already draws
    coalitions proportionally to the kernel.
    """
    B, M, _ = masks.shape
    ghat = v0[:, None] + np.einsum("bmd,bd->bm", masks.astype(np.float64), phi)
    resid = ghat - v
    w = np.ones((B, M)) if weights is None else weights
    fit = float((w * resid ** 2).sum() / (B * M))
    eff = phi.sum(axis=1) - (fx - v0)
    pen = float(efficiency_weight * (eff ** 2).mean())
    dphi = (2.0 / (B * M)) * np.einsum("bm,bmd->bd", w * resid, masks.astype(np.float64))
    dphi += (2.0 * efficiency_weight / B) * eff[:, None]
    return fit + pen, dphi


def loss_and_grads(net: Amortizer, Xb: np.ndarray, masks: np.ndarray, v: np.ndarray,
                   v0: np.ndarray, fx: np.ndarray, efficiency_weight: float,
                   train: bool = False, rng: np.random.Generator | None = None
                   ) -> tuple[float, dict[str, np.ndarray]]:
    cache: list = []
    phi = net.forward(Xb, train=train, rng=rng, cache=cache)
    loss, dphi = surrogate_loss(phi, masks, v, v0, fx, efficiency_weight)
    return loss, net.backward(cache, dphi)


# ---- training targets ----------------------------------------------------


class _TargetProvider:
    """Coalition-value targets for training batches.

    One background per training run; filtered_conditional keeps one pool
    per side of the threshold, counterfactual one background per instance.
    """

    def __init__(self, train_X: np.ndarray, spec: ValueFunctionSpec, model: Predictor,
                 cat_mask: np.ndarray | None):
        self.spec, self.model = spec, model
        self.cat_mask = cat_mask
        self.train_X = train_X
        self._per_instance: dict[int, BackgroundSet] = {}
        self._sides: dict[bool, BackgroundSet] = {}
        self._shared: BackgroundSet | None = None
        if spec.variant == "filtered_conditional" and spec.output_filter is None:
            thr = spec.threshold if spec.threshold is not None else 0.5
            for high_side in (False, True):
                band = (thr, 1.0) if not high_side else (0.0, thr)
                sub = ValueFunctionSpec("filtered_conditional", seed=spec.seed,
                                        background_size=spec.background_size,
                                        output_filter=band)
                self._sides[high_side] = build_background(train_X, sub, model,
                                                          cat_mask=cat_mask)
        elif spec.variant != "counterfactual":
            self._shared = build_background(train_X, spec, model, x=None, cat_mask=cat_mask)

    def background_for(self, x: np.ndarray, row_id: int, fx: float) -> BackgroundSet:
        if self._shared is not None:
            return self._shared
        if self.spec.variant == "filtered_conditional":
            thr = self.spec.threshold if self.spec.threshold is not None else 0.5
            return self._sides[fx >= thr]
        bg = self._per_instance.get(row_id)
        if bg is None:
            bg = build_background(self.train_X, self.spec, self.model, x=x,
                                  cat_mask=self.cat_mask)
            self._per_instance[row_id] = bg
        return bg

    def targets(self, Xb: np.ndarray, row_ids: np.ndarray, fxb: np.ndarray,
                masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """v (B,M) and v0 (B,) for a batch of instances and their masks."""
        from .valuefunctions import values_for_masks

        B, M, _ = masks.shape
        v = np.empty((B, M))
        v0 = np.empty(B)
        for i in range(B):
            bg = self.background_for(Xb[i], int(row_ids[i]), float(fxb[i]))
            v[i] = values_for_masks(Xb[i], masks[i], bg, self.model)
            v0[i] = bg.base_value
        return v, v0


def train_amortizer(train_X: np.ndarray, model: Predictor, spec: ValueFunctionSpec,
                    config: TrainConfig = TrainConfig(), cat_levels: dict[int, int] | None = None,
                    hidden: tuple[int, ...] = (128, 128, 128),
                    model_fingerprint: str = "") -> tuple[Amortizer, list[float]]:
    """Fit the attribution net against the value function named by spec.

    Returns the trained net and the per-epoch loss history. Raises
    TrainingDivergedError if the loss exceeds divergence_factor times the
    first epoch's loss for divergence_patience consecutive epochs, or goes
    non-finite.
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    n, d = train_X.shape
    cat_mask = None
    if cat_levels:
        cat_mask = np.zeros(d, dtype=bool)
        cat_mask[list(cat_levels)] = True
    arch = make_arch(d, cat_levels, hidden=hidden)
    net = init_amortizer(arch, seed=config.seed)
    net.spec_fingerprint = spec.fingerprint()
    net.model_fingerprint = model_fingerprint

    provider = _TargetProvider(train_X, spec, model, cat_mask)
    fx_all = model.score(train_X)

    adam_epochs = max(1, int(round(config.adam_frac * config.epochs)))
    warmup = max(1, int(round(config.warmup_frac * config.epochs)))
    adam_m = {k: np.zeros_like(p) for k, p in net.params.items()}
    adam_v = {k: np.zeros_like(p) for k, p in net.params.items()}
    vel = {k: np.zeros_like(p) for k, p in net.params.items()}
    t_adam = 0

    history: list[float] = []
    bad_epochs = 0
    for epoch in range(config.epochs):
        rng = substream(config.seed, "amortizer-epoch", epoch)
        order = rng.permutation(n)
        if epoch < adam_epochs:
            lr = config.lr * min(1.0, (epoch + 1) / warmup)
            phase = "adam"
        else:
            u = (epoch - adam_epochs) / max(1, config.epochs - adam_epochs)
            lr = config.lr * 0.5 * (1.0 + math.cos(math.pi * u))
            phase = "sgd"

        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            Xb = train_X[rows]
            B = len(rows)
            masks = sample_coalitions(d, B * config.masks_per_input, rng, paired=True)
            masks = masks.reshape(B, config.masks_per_input, d)
            v, v0 = provider.targets(Xb, rows, fx_all[rows], masks)
            loss, grads = loss_and_grads(net, Xb, masks, v, v0, fx_all[rows],
                                         config.efficiency_weight, train=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            total += loss * B
            count += B
            if phase == "adam":
                t_adam += 1
                for k, p in net.params.items():
                    g = grads[k]
                    adam_m[k] = 0.9 * adam_m[k] + 0.1 * g
                    adam_v[k] = 0.999 * adam_v[k] + 0.001 * g * g
                    mhat = adam_m[k] / (1 - 0.9 ** t_adam)
                    vhat = adam_v[k] / (1 - 0.999 ** t_adam)
                    p -= lr * mhat / (np.sqrt(vhat) + 1e-8)
            else:
                for k, p in net.params.items():
                    vel[k] = config.momentum * vel[k] - lr * grads[k]
                    p += vel[k]

        epoch_loss = total / count
        history.append(epoch_loss)
        if epoch_loss > config.divergence_factor * max(history[0], 1e-12):
            bad_epochs += 1
            if bad_epochs >= config.divergence_patience:
                raise TrainingDivergedError(
                    f"loss {epoch_loss:.4g} stayed above {config.divergence_factor}x "
                    f"the initial loss for {bad_epochs} epochs")
        else:
            bad_epochs = 0

    net.train_meta = {"epochs": config.epochs, "final_loss": history[-1] if history else None,
                      "config": asdict(config)}
    return net, history


def predict_attributions(net: Amortizer, x: np.ndarray, model: Predictor,
                         base_value: float) -> AttributionVector:
    """One forward pass plus the exact efficiency correction.

    The residual between f(x) - v(empty) and the raw attribution sum is
    spread evenly across features, so the served vector always satisfies
    the efficiency identity.
    """
    x = np.asarray(x, dtype=np.float64)
    phi = net.predict(x[None, :])[0]
    fx = score_one(model, x)
    gap = (fx - base_value - phi.sum()) / net.arch.d
    phi = phi + gap
    return AttributionVector(phi, base_value, fx, "amortized",
                             {"efficiency_correction": float(gap)})
