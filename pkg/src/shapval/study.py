"""Blinded within-subjects case-review study: assignment, payloads, logging.

The service serves one analyst session at a time through a strictly linear
flow. Arms (the eight value functions plus a no-explanation control) are
assigned by blocked randomization, cases are stratified across score
quintiles, and every submitted review is appended to a hash-chained,
fsynced JSONL log. Arm identity never leaves the server: client payloads
carry only scores, attributions, and reason codes.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import LogIntegrityError, StudyStateError
from .seeding import substream


class UnknownSessionError(StudyStateError):
    """Session id is not live on this server."""


class ValidationRejectedError(StudyStateError):
    """Client sent a value outside the closed enums or consistency rules."""


class SessionLockedError(StudyStateError):
    """Another client token already holds this session."""

ARMS = ("none", "fixed_zero", "fixed_mean", "uniform", "marginal",
        "joint_marginal", "conditional", "counterfactual", "filtered_conditional")
EXPLANATION_ARMS = ARMS[1:]

DECISIONS = ("risk", "no_risk")
CONFIDENCES = ("weak", "moderate", "strong")
CLARITIES = ("clear", "confusing", "not_applicable")
ML_KNOWLEDGE = ("low", "moderate", "high")
YESNO = ("yes", "no")

SCHEMA_VERSION = "v1"
DURATION_FLAG_SECONDS = 10.0


@dataclass(frozen=True)
class AnalystProfile:
    analyst_id: str
    professional: bool
    ml_knowledge: str
    shapley_familiarity: str
    domain_knowledge: str

    def __post_init__(self):
        if self.ml_knowledge not in ML_KNOWLEDGE:
            raise ValidationRejectedError(f"ml_knowledge must be one of {ML_KNOWLEDGE}")
        if self.shapley_familiarity not in YESNO or self.domain_knowledge not in YESNO:
            raise ValidationRejectedError("familiarity fields must be 'yes' or 'no'")


@dataclass
class Case:
    case_id: str
    raw: dict[str, object]
    score: float
    percentile: float
    label: int
    quintile: int


@dataclass
class StudyContext:
    """Everything the service needs, precomputed so serving stays pure.

    ``attributions[arm]`` is the (n_cases, d) matrix of served phi vectors
    and ``bases[arm]`` the matching v(empty) anchors; payloads are lookups,
    which makes them deterministic by construction.
    """

    dataset: str
    feature_names: list[str]
    schema_kinds: dict[str, str]
    cases: list[Case]
    histogram: dict
    threshold: float
    attributions: dict[str, np.ndarray]
    bases: dict[str, np.ndarray]
    fingerprints: dict[str, str]
    percentiles: dict[str, tuple[float, float]]
    feature_stats: dict[str, dict]
    cases_per_session: int = 9

    def __post_init__(self):
        missing = [a for a in EXPLANATION_ARMS if a not in self.attributions]
        self.missing_arms = missing


def format_raw(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    return f"{int(v)}" if v == int(v) else f"{v:.4g}"


def render_reason_codes(phi: np.ndarray, raw: dict[str, object], order: np.ndarray,
                        feature_names: list[str], schema_kinds: dict[str, str],
                        percentiles: dict[str, tuple[float, float]]) -> list[str]:
    """One deterministic sentence per displayed feature.

    Numeric: "<feature> value of <v> is <high|typical|low>" with high/low
    at the 90th/10th train percentile; categorical repeats the level in
    the bucket slot. A nonzero attribution appends the direction clause.
    """
    out = []
    for j in order:
        name = feature_names[j]
        vtxt = format_raw(raw[name])
        if schema_kinds[name] == "categorical":
            bucket = vtxt
        else:
            p10, p90 = percentiles[name]
            v = float(raw[name])
            bucket = "high" if v > p90 else ("low" if v < p10 else "typical")
        sentence = f"{name} value of {vtxt} is {bucket}"
        if phi[j] > 0:
            sentence += ", raising the risk score"
        elif phi[j] < 0:
            sentence += ", lowering the risk score"
        out.append(sentence)
    return out


@dataclass
class _Session:
    session_id: str
    profile: AnalystProfile
    dataset: str
    seed: int
    assignment: list[tuple[str, str]]  # (case_id, arm), arm hidden from client
    cursor: int = 0
    served_at: dict[str, int] = field(default_factory=dict)
    acks: dict[str, dict] = field(default_factory=dict)
    client_token: str | None = None


class ReviewLog:
    """Append-only hash-chained JSONL file with fsync on every append."""

    def __init__(self, path):
        self.path = str(path)
        self._lock = threading.Lock()
        self._count = 0
        self._prev_hash = ""
        if os.path.exists(self.path):
            for rec in self.read_all(verify=True):
                self._count += 1
                self._prev_hash = rec["hash"]

    @staticmethod
    def _record_hash(record: dict, prev_hash: str) -> str:
        body = {k: v for k, v in record.items() if k != "hash"}
        text = prev_hash + json.dumps(body, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def append(self, record: dict) -> dict:
        with self._lock:
            record = dict(record)
            record["record_index"] = self._count
            record["prev_hash"] = self._prev_hash
            record["hash"] = self._record_hash(record, self._prev_hash)
            line = json.dumps(record, sort_keys=True)
            with open(self.path, "a") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._prev_hash = record["hash"]
            self._count += 1
            return record

    def read_all(self, verify: bool = False) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        records = []
        prev = ""
        with open(self.path) as fh:
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if verify:
                    if rec.get("prev_hash") != prev or rec.get("hash") != self._record_hash(rec, prev):
                        raise LogIntegrityError(f"hash chain broken at record {i}")
                    prev = rec["hash"]
                records.append(rec)
        return records

    def __len__(self):
        return self._count


class StudyService:
    """Session lifecycle over a fixed StudyContext."""

    def __init__(self, context: StudyContext, log_path, clock=None):
        self.ctx = context
        self.log = ReviewLog(log_path)
        self.clock = clock if clock is not None else (lambda: int(time.time() * 1000))
        self.sessions: dict[str, _Session] = {}
        self._session_counter = 0
        self._lock = threading.Lock()
        self._rows = {c.case_id: i for i, c in enumerate(context.cases)}

    # ---- assignment -----------------------------------------------------

    def _draw_cases(self, rng: np.random.Generator, n: int) -> list[int]:
        """Stratified draw: each block of 9 spans the five score quintiles
        and both sides of the operational threshold where possible."""
        by_quintile = {q: [i for i, c in enumerate(self.ctx.cases) if c.quintile == q]
                       for q in range(5)}
        chosen: list[int] = []
        used: set[int] = set()

        def take(pool: list[int]) -> int | None:
            fresh = [i for i in pool if i not in used]
            pick_from = fresh if fresh else pool
            if not pick_from:
                return None
            i = int(rng.choice(pick_from))
            used.add(i)
            return i

        n_blocks = (n + 8) // 9
        for b in range(n_blocks):
            block: list[int] = []
            want = min(9, n - 9 * b)
            counts = [want // 5] * 5
            for r in range(want % 5):
                counts[(b + r) % 5] += 1
            for q in range(5):
                for _ in range(counts[q]):
                    i = take(by_quintile[q])
                    if i is None:
                        i = take(list(range(len(self.ctx.cases))))
                    if i is not None:
                        block.append(i)
            thr = self.ctx.threshold
            sides = {self.ctx.cases[i].score >= thr for i in block}
            if len(sides) == 1 and len(block) > 1:
                need_high = (False in sides)
                other = [i for i, c in enumerate(self.ctx.cases)
                         if (c.score >= thr) == need_high]
                swap = take(other)
                if swap is not None:
                    block[-1] = swap
            chosen.extend(block)
        return chosen[:n]

    def create_session(self, profile: AnalystProfile, dataset: str, seed: int) -> dict:
        if dataset != self.ctx.dataset:
            raise StudyStateError(f"unknown dataset {dataset!r}; serving {self.ctx.dataset!r}")
        if self.ctx.missing_arms:
            raise StudyStateError(
                f"cannot create session: no checkpoint for arms {self.ctx.missing_arms}")
        n = self.ctx.cases_per_session
        rng = substream(seed, "assignment", profile.analyst_id, dataset)
        case_ids = [self.ctx.cases[i].case_id for i in self._draw_cases(rng, n)]
        arms: list[str] = []
        for b in range(0, n, 9):
            block = list(ARMS)
            arms.extend([block[i] for i in rng.permutation(9)][:n - b])
        assignment = list(zip(case_ids, arms))
        with self._lock:
            self._session_counter += 1
            sid = f"s{self._session_counter:05d}-" + hashlib.sha256(
                f"{profile.analyst_id}|{dataset}|{seed}".encode()).hexdigest()[:8]
        self.sessions[sid] = _Session(sid, profile, dataset, seed, assignment)
        return {"schema_version": SCHEMA_VERSION, "session_id": sid,
                "n_cases": n, "dataset": dataset}

    def _session(self, session_id: str) -> _Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise UnknownSessionError(f"unknown session {session_id!r}")
        return s

    def _check_token(self, s: _Session, client_token: str | None):
        if client_token is None:
            return
        if s.client_token is None:
            s.client_token = client_token
        elif s.client_token != client_token:
            raise SessionLockedError("session is locked by another client")

    # ---- serving ---------------------------------------------------------

    def next_case(self, session_id: str, client_token: str | None = None) -> dict:
        s = self._session(session_id)
        self._check_token(s, client_token)
        if s.cursor >= len(s.assignment):
            return {"schema_version": SCHEMA_VERSION, "done": True,
                    "n_reviewed": len(s.assignment)}
        case_id, arm = s.assignment[s.cursor]
        if case_id not in s.served_at:
            s.served_at[case_id] = self.clock()
        return self._payload(case_id, arm, s.cursor, len(s.assignment))

    def _payload(self, case_id: str, arm: str, position: int, total: int) -> dict:
        ctx = self.ctx
        case = ctx.cases[self._case_row(case_id)]
        payload = {
            "schema_version": SCHEMA_VERSION,
            "done": False,
            "case_id": case_id,
            "position": position,
            "total": total,
            "model_score": round(case.score, 6),
            "score_percentile": round(case.percentile, 2),
            "score_histogram": ctx.histogram,
            "threshold": ctx.threshold,
            "features": {k: (v if isinstance(v, str) else float(v)) for k, v in case.raw.items()},
            "feature_stats": ctx.feature_stats,
            "explanation": None,
        }
        if arm != "none":
            phi = ctx.attributions[arm][self._case_row(case_id)]
            order = np.lexsort((np.arange(len(phi)), -np.abs(phi)))[:min(4, len(phi))]
            payload["explanation"] = {
                "bars": [{"feature": ctx.feature_names[j], "phi": float(phi[j])} for j in order],
                "reason_codes": render_reason_codes(
                    phi, case.raw, order, ctx.feature_names, ctx.schema_kinds, ctx.percentiles),
                "phi": [float(v) for v in phi],
                "base_value": float(ctx.bases[arm][self._case_row(case_id)]),
            }
        return payload

    def _case_row(self, case_id: str) -> int:
        row = self._rows.get(case_id)
        if row is None:
            raise StudyStateError(f"unknown case {case_id!r}")
        return row

    # ---- submission -------------------------------------------------------

    def submit_review(self, session_id: str, decision: str, confidence: str,
                      clarity: str | None, view_duration: float,
                      case_id: str | None = None, reloaded: bool = False,
                      client_token: str | None = None) -> dict:
        s = self._session(session_id)
        self._check_token(s, client_token)
        if s.cursor >= len(s.assignment) and case_id is None:
            raise StudyStateError("session already complete")

        pending_id, arm = (s.assignment[s.cursor] if s.cursor < len(s.assignment)
                           else (None, None))
        target = case_id if case_id is not None else pending_id
        if target in s.acks:
            return {**s.acks[target], "duplicate": True}
        if target != pending_id:
            raise StudyStateError(f"case {target!r} is not the pending case")
        if pending_id not in s.served_at:
            raise StudyStateError("case was never served")

        if decision not in DECISIONS:
            raise ValidationRejectedError(f"decision must be one of {DECISIONS}")
        if confidence not in CONFIDENCES:
            raise ValidationRejectedError(f"confidence must be one of {CONFIDENCES}")
        if arm == "none":
            if clarity not in (None, "not_applicable"):
                raise ValidationRejectedError("clarity does not apply to the control arm")
            clarity = "not_applicable"
        else:
            if clarity not in ("clear", "confusing"):
                raise ValidationRejectedError("clarity must be 'clear' or 'confusing'")
        if not (isinstance(view_duration, (int, float)) and view_duration >= 0):
            raise ValidationRejectedError("view duration must be a non-negative number")

        case = self.ctx.cases[self._case_row(pending_id)]
        served = s.served_at[pending_id]
        submitted = self.clock()
        if submitted < served:
            submitted = served
        flags = []
        server_secs = (submitted - served) / 1000.0
        if abs(view_duration - server_secs) > DURATION_FLAG_SECONDS:
            flags.append("duration_mismatch")
        if reloaded:
            flags.append("reloaded")

        record = {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "analyst_id": s.profile.analyst_id,
            "professional": s.profile.professional,
            "ml_knowledge": s.profile.ml_knowledge,
            "shapley_familiarity": s.profile.shapley_familiarity,
            "domain_knowledge": s.profile.domain_knowledge,
            "dataset": s.dataset,
            "case_id": pending_id,
            "arm": arm,
            "decision": decision,
            "confidence": confidence,
            "clarity": clarity,
            "served_at": served,
            "submitted_at": submitted,
            "view_duration": float(view_duration),
            "model_score": round(case.score, 6),
            "score_percentile": round(case.percentile, 2),
            "true_label": int(case.label),
            "features": {k: (v if isinstance(v, str) else float(v)) for k, v in case.raw.items()},
            "variant_fingerprint": self.ctx.fingerprints.get(arm, ""),
            "flags": flags,
        }
        stored = self.log.append(record)
        s.cursor += 1
        ack = {"schema_version": SCHEMA_VERSION, "record_index": stored["record_index"],
               "duplicate": False, "remaining": len(s.assignment) - s.cursor}
        s.acks[pending_id] = ack
        return ack

    # ---- export -----------------------------------------------------------

    def session_assignment(self, session_id: str) -> list[tuple[str, str]]:
        """Server-side view of (case_id, arm) pairs; simulation harnesses
        and audits use this, clients never see it."""
        return list(self._session(session_id).assignment)

    def export_records(self, since: int | None = None) -> list[dict]:
        records = self.log.read_all(verify=True)
        if since is not None:
            records = [r for r in records if r["submitted_at"] >= since]
        return sorted(records, key=lambda r: (r["submitted_at"], r["record_index"]))

    def export_ndjson(self, since: int | None = None) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.export_records(since))


def import_ndjson(text: str) -> list[dict]:
    """Parse an exported stream back into records (inverse of export)."""
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def score_histogram(val_scores: np.ndarray, n_bins: int = 20) -> dict:
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(np.asarray(val_scores, dtype=np.float64), bins=edges)
    return {"bin_edges": [round(float(e), 6) for e in edges],
            "counts": [int(c) for c in counts]}


def score_percentile(score: float, val_scores: np.ndarray) -> float:
    val = np.asarray(val_scores, dtype=np.float64)
    return float(100.0 * np.mean(val <= score))


def feature_stats_from_train(schema_kinds: dict[str, str], train_raw: dict[str, np.ndarray],
                             train_y: np.ndarray) -> dict[str, dict]:
    """Per-feature context for the data explorer: level prevalence and mean
    label for categorical features, quartiles for numeric ones."""
    stats: dict[str, dict] = {}
    y = np.asarray(train_y, dtype=np.float64)
    for name, kind in schema_kinds.items():
        col = train_raw[name]
        if kind == "categorical":
            levels = []
            for lv in sorted(set(str(v) for v in col)):
                sel = np.array([str(v) == lv for v in col])
                levels.append({"level": lv,
                               "prevalence": round(float(sel.mean()), 4),
                               "mean_label": round(float(y[sel].mean()), 4)})
            stats[name] = {"kind": "categorical", "levels": levels}
        else:
            v = np.asarray(col, dtype=np.float64)
            q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
            stats[name] = {"kind": "numeric",
                           "quartiles": [round(float(x), 6) for x in q]}
    return stats


def assemble_context(dataset: str, feature_names: list[str], schema_kinds: dict[str, str],
                     pool_raw: list[dict], pool_scores: np.ndarray, pool_labels: np.ndarray,
                     val_scores: np.ndarray, threshold: float,
                     attributions: dict[str, np.ndarray], bases: dict[str, np.ndarray],
                     fingerprints: dict[str, str], train_raw: dict[str, np.ndarray],
                     train_y: np.ndarray, cases_per_session: int = 9) -> StudyContext:
    """Precompute the full serving context from raw case material.

    Case quintiles come from the pool's own score distribution (ties fall
    to the lower bin); percentiles and the histogram come from validation
    scores; feature percentiles for reason-code bucketing come from train.
    """
    scores = np.asarray(pool_scores, dtype=np.float64)
    edges = np.quantile(scores, [0.2, 0.4, 0.6, 0.8])
    cases = []
    for i, raw in enumerate(pool_raw):
        s = float(scores[i])
        quintile = int(np.searchsorted(edges, s, side="right"))
        cases.append(Case(case_id=f"c{i:04d}", raw=raw, score=s,
                          percentile=score_percentile(s, val_scores),
                          label=int(pool_labels[i]), quintile=quintile))
    percentiles = {}
    for name, kind in schema_kinds.items():
        if kind == "numeric":
            v = np.asarray(train_raw[name], dtype=np.float64)
            percentiles[name] = (float(np.quantile(v, 0.10)), float(np.quantile(v, 0.90)))
    return StudyContext(
        dataset=dataset, feature_names=feature_names, schema_kinds=schema_kinds,
        cases=cases, histogram=score_histogram(val_scores), threshold=threshold,
        attributions=attributions, bases=bases, fingerprints=fingerprints,
        percentiles=percentiles,
        feature_stats=feature_stats_from_train(schema_kinds, train_raw, train_y),
        cases_per_session=cases_per_session)
