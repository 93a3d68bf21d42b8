"""Synthetic analysts for calibrating the outcome models.

Two paths share one response model. The fast path fabricates review
records directly (no service, no disk) so calibration studies can run
hundreds of replicates. The scripted path drives a live StudyService the
way a browser would, producing a genuine hash-chained log.

The response model is logit-linear in exactly the quantities the outcome
models adjust for (entropy, score error, exposure, analyst identity), so
planted per-arm effects are recoverable without bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .models import predictive_entropy
from .seeding import substream
from .study import ARMS, EXPLANATION_ARMS, ML_KNOWLEDGE, AnalystProfile, StudyService

_EPOCH_MS = 1_700_000_000_000


@dataclass(frozen=True)
class PlantedEffects:
    """Per-arm effects the simulator injects, all relative to the control.

    ``accuracy`` and ``clarity`` are log odds ratios, ``confidence`` is a
    latent shift on the ordinal scale, ``time`` is additive on log(1+t).
    """

    accuracy: dict = field(default_factory=dict)
    clarity: dict = field(default_factory=dict)
    confidence: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)

    @classmethod
    def null(cls) -> "PlantedEffects":
        return cls()

    @classmethod
    def uniform(cls, outcome: str, value: float) -> "PlantedEffects":
        planted = {a: value for a in EXPLANATION_ARMS}
        if outcome not in ("accuracy", "clarity", "confidence", "time"):
            raise ValueError(f"unknown outcome {outcome!r}")
        return cls(**{outcome: planted})


def sample_profile(seed: int, i: int) -> AnalystProfile:
    rng = substream(seed, "sim-profile", i)
    return AnalystProfile(
        analyst_id=f"a{i:04d}",
        professional=bool(rng.random() < 0.6),
        ml_knowledge=str(rng.choice(ML_KNOWLEDGE, p=[0.3, 0.45, 0.25])),
        shapley_familiarity="yes" if rng.random() < 0.4 else "no",
        domain_knowledge="yes" if rng.random() < 0.55 else "no",
    )


def respond(arm: str, score: float, label: int, exposure_k: int, u_analyst: float,
            planted: PlantedEffects, rng: np.random.Generator) -> dict:
    """One simulated review: decision, confidence, clarity, seconds spent."""
    e = float(predictive_entropy(score))
    err = abs(score - float(label))

    eta_acc = (0.45 + planted.accuracy.get(arm, 0.0) - 0.9 * (e - 0.4)
               - 0.5 * (err - 0.3) + 0.08 * (np.log1p(exposure_k) - 1.2) + u_analyst)
    correct = rng.random() < expit(eta_acc)
    if correct:
        decision = "risk" if label == 1 else "no_risk"
    else:
        decision = "no_risk" if label == 1 else "risk"

    eta_conf = (0.2 + planted.confidence.get(arm, 0.0) - 0.7 * (e - 0.4) + 0.5 * u_analyst)
    p0 = expit(-0.55 - eta_conf)
    p1 = expit(0.75 - eta_conf)
    u = rng.random()
    confidence = "weak" if u < p0 else ("moderate" if u < p1 else "strong")

    if arm == "none":
        clarity = None
    else:
        p_clear = expit(0.75 + planted.clarity.get(arm, 0.0) + 0.4 * u_analyst)
        clarity = "clear" if rng.random() < p_clear else "confusing"

    log_t = (2.9 + planted.time.get(arm, 0.0) + 0.5 * e + 0.3 * rng.normal())
    seconds = max(float(np.expm1(log_t)), 0.5)
    return {"decision": decision, "confidence": confidence,
            "clarity": clarity, "view_duration": round(seconds, 3)}


def simulate_records(n_analysts: int, seed: int, planted: PlantedEffects | None = None,
                     n_cases: int = 45, cases_per_analyst: int = 9,
                     dataset: str = "demo-credit") -> list[dict]:
    """Fabricate a flat review log without touching a service or disk."""
    planted = planted or PlantedEffects.null()
    rng_cases = substream(seed, "sim-cases")
    scores = rng_cases.beta(2.0, 2.0, size=n_cases)
    labels = (rng_cases.random(n_cases) < np.clip(0.1 + 0.8 * scores, 0.02, 0.98)).astype(int)

    records: list[dict] = []
    t_ms = _EPOCH_MS
    for i in range(n_analysts):
        profile = sample_profile(seed, i)
        rng = substream(seed, "sim-analyst", i)
        u_analyst = float(rng.normal(0.0, 0.35))
        arms: list[str] = []
        for b in range(0, cases_per_analyst, 9):
            block = [ARMS[j] for j in rng.permutation(9)]
            arms.extend(block[:cases_per_analyst - b])
        replace = n_cases < cases_per_analyst
        case_rows = rng.choice(n_cases, size=cases_per_analyst, replace=replace)
        for k, (arm, row) in enumerate(zip(arms, case_rows), start=1):
            score = float(scores[row])
            label = int(labels[row])
            ans = respond(arm, score, label, k, u_analyst, planted, rng)
            served = t_ms
            submitted = served + int(round(ans["view_duration"] * 1000))
            t_ms = submitted + 1500
            records.append({
                "schema_version": "v1",
                "session_id": f"sim-{i:04d}",
                "record_index": len(records),
                "analyst_id": profile.analyst_id,
                "professional": profile.professional,
                "ml_knowledge": profile.ml_knowledge,
                "shapley_familiarity": profile.shapley_familiarity,
                "domain_knowledge": profile.domain_knowledge,
                "dataset": dataset,
                "case_id": f"c{int(row):04d}",
                "arm": arm,
                "decision": ans["decision"],
                "confidence": ans["confidence"],
                "clarity": ans["clarity"] if ans["clarity"] is not None else "not_applicable",
                "served_at": served,
                "submitted_at": submitted,
                "view_duration": ans["view_duration"],
                "model_score": round(score, 6),
                "true_label": label,
                "features": {},
                "flags": [],
            })
    return records


class FakeClock:
    """Deterministic millisecond clock the scripted path advances by hand."""

    def __init__(self, start_ms: int = _EPOCH_MS):
        self.t = start_ms

    def __call__(self) -> int:
        return self.t

    def advance(self, seconds: float):
        self.t += int(round(seconds * 1000))


def run_scripted_study(service: StudyService, n_analysts: int, seed: int,
                       planted: PlantedEffects | None = None,
                       clock: FakeClock | None = None) -> int:
    """Drive a live service end to end with simulated analysts.

    The responder peeks at the server-side assignment for the arm and at
    the case label, which no real client could do; that is the point of a
    simulation harness. Returns the number of records written.
    """
    planted = planted or PlantedEffects.null()
    n_written = 0
    label_by_case = {c.case_id: c.label for c in service.ctx.cases}
    for i in range(n_analysts):
        profile = sample_profile(seed, i)
        rng = substream(seed, "sim-analyst", i)
        u_analyst = float(rng.normal(0.0, 0.35))
        ack = service.create_session(profile, service.ctx.dataset, seed)
        sid = ack["session_id"]
        token = f"tok-{i:04d}"
        assignment = service.session_assignment(sid)
        k = 0
        while True:
            payload = service.next_case(sid, client_token=token)
            if payload.get("done"):
                break
            k += 1
            case_id = payload["case_id"]
            arm = assignment[payload["position"]][1]
            ans = respond(arm, float(payload["model_score"]), label_by_case[case_id],
                          k, u_analyst, planted, rng)
            if clock is not None:
                clock.advance(ans["view_duration"])
            service.submit_review(sid, ans["decision"], ans["confidence"], ans["clarity"],
                                  ans["view_duration"], case_id=case_id, client_token=token)
            n_written += 1
            if clock is not None:
                clock.advance(1.0)
    return n_written
