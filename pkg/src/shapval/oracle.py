"""Reference Shapley attributions for a fixed value function.

Two engines: exact enumeration over all 2^d coalitions (small d), and the
kernel-weighted linear regression estimator with the efficiency constraint
eliminated exactly. Both consume coalition values from a BackgroundSet, so
every value-function variant gets the same estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .errors import EnumerationLimitError
from .models import Predictor, score_one
from .seeding import substream
from .valuefunctions import BackgroundSet, values_for_masks

MAX_ENUM_DIM = 14


@dataclass
class AttributionVector:
    """Per-feature attributions plus the two anchors they connect."""

    phi: np.ndarray
    base_value: float
    prediction: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def efficiency_gap(self) -> float:
        return float(self.phi.sum() - (self.prediction - self.base_value))


def shapley_kernel_weight(d: int, s: int) -> float:
    """Regression weight pi(S) for a coalition of size s among d features."""
    if s <= 0 or s >= d:
        raise ValueError("kernel weight is defined for interior sizes only")
    return (d - 1) / (comb(d, s) * s * (d - s))


def size_mass(d: int) -> np.ndarray:
    """Total kernel mass per coalition size, s = 1..d-1."""
    s = np.arange(1, d)
    return (d - 1) / (s * (d - s))


def reference_budget(d: int, per_dim: int = 2048) -> int | None:
    """Coalition budget for the reference estimate: None means enumerate."""
    return None if d <= MAX_ENUM_DIM else per_dim * d


def _all_masks(d: int) -> np.ndarray:
    bits = np.arange(1 << d, dtype=np.uint32)
    return ((bits[:, None] >> np.arange(d)) & 1).astype(bool)


def exact_shapley(x: np.ndarray, bg: BackgroundSet, model: Predictor,
                  chunk_size: int = 2048) -> AttributionVector:
    """Full enumeration of the Shapley sum; O(2^d) coalition values."""
    x = np.asarray(x, dtype=np.float64)
    d = len(x)
    if d > MAX_ENUM_DIM:
        raise EnumerationLimitError(f"exact enumeration supports d <= {MAX_ENUM_DIM}, got {d}")
    masks = _all_masks(d)
    v = values_for_masks(x, masks, bg, model, chunk_size=chunk_size)
    sizes = masks.sum(axis=1)
    fact = np.array([factorial(k) for k in range(d + 1)], dtype=np.float64)
    coef = fact[sizes] * fact[d - 1 - sizes] / fact[d]

    phi = np.empty(d)
    bits = np.arange(1 << d, dtype=np.int64)
    for i in range(d):
        without = bits[(bits >> i) & 1 == 0]
        gain = v[without | (1 << i)] - v[without]
        phi[i] = float(np.dot(coef[without], gain))
    return AttributionVector(phi, bg.base_value, score_one(model, x), "exact",
                             {"n_coalitions": 1 << d})


def sample_coalitions(d: int, n: int, rng: np.random.Generator, paired: bool = True) -> np.ndarray:
    """Draw interior coalition masks with probability proportional to the
    kernel weight: sizes by kernel mass, subsets uniform within a size.

    Paired sampling appends each draw's complement, which shares its kernel
    weight and cancels odd-order noise terms.
    """
    if d < 2:
        raise ValueError("coalition sampling needs d >= 2")
    mass = size_mass(d)
    p = mass / mass.sum()
    k = (n + 1) // 2 if paired else n
    sizes = rng.choice(np.arange(1, d), size=k, p=p)
    masks = np.zeros((k, d), dtype=bool)
    for row, s in enumerate(sizes):
        masks[row, rng.choice(d, size=int(s), replace=False)] = True
    if paired:
        masks = np.vstack([masks, ~masks])[:n]
    return masks


def _solve_constrained_wls(A: np.ndarray, y: np.ndarray, w: np.ndarray,
                           delta: float) -> tuple[np.ndarray, bool]:
    """Least squares for phi with the efficiency constraint sum(phi) = delta
    eliminated exactly by substituting the last coefficient."""
    d = A.shape[1]
    if d == 1:
        return np.array([delta]), False
    Z = A[:, :-1] - A[:, -1:]
    t = y - A[:, -1] * delta
    sw = np.sqrt(w)
    Zw, tw = Z * sw[:, None], t * sw
    ridge = False
    sol, _, rank, _ = np.linalg.lstsq(Zw, tw, rcond=None)
    if rank < d - 1:
        # Degenerate design: fall back to a lightly ridged normal system.
        ridge = True
        G = Zw.T @ Zw + 1e-8 * np.eye(d - 1)
        sol = np.linalg.solve(G, Zw.T @ tw)
    phi = np.empty(d)
    phi[:-1] = sol
    phi[-1] = delta - sol.sum()
    return phi, ridge


def kernelshap_estimate(x: np.ndarray, bg: BackgroundSet, model: Predictor,
                        n_samples: int | None = None, seed: int = 0,
                        chunk_size: int = 2048) -> AttributionVector:
    """Kernel-weighted regression estimate of the Shapley values.

    With ``n_samples`` None (or at least the 2^d - 2 interior coalitions,
    for feasible d) every interior coalition enters once with its exact
    kernel weight; otherwise coalitions are sampled proportionally to the
    kernel and regressed with uniform weights. The grand coalition and the
    empty set enter through the efficiency constraint, which binds exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    d = len(x)
    fx = score_one(model, x)
    delta = fx - bg.base_value
    if d == 1:
        return AttributionVector(np.array([delta]), bg.base_value, fx, "kernelshap",
                                 {"n_coalitions": 0, "ridge_fallback": False, "enumerated": True})

    interior = (1 << d) - 2 if d <= 26 else None
    enumerate_all = interior is not None and (n_samples is None or n_samples >= interior)
    if enumerate_all:
        masks = _all_masks(d)
        sizes = masks.sum(axis=1)
        keep = (sizes > 0) & (sizes < d)
        masks = masks[keep]
        s = sizes[keep]
        w = (d - 1) / (np.array([comb(d, int(k)) for k in s]) * s * (d - s))
    else:
        if n_samples is None:
            raise ValueError(f"d={d} is too large to enumerate; pass n_samples")
        rng = substream(seed, "kernelshap", d)
        masks = sample_coalitions(d, n_samples, rng, paired=True)
        w = np.ones(len(masks))

    v = values_for_masks(x, masks, bg, model, chunk_size=chunk_size)
    y = v - bg.base_value
    phi, ridge = _solve_constrained_wls(masks.astype(np.float64), y, w, delta)
    return AttributionVector(phi, bg.base_value, fx, "kernelshap",
                             {"n_coalitions": len(masks), "ridge_fallback": ridge,
                              "enumerated": enumerate_all})
