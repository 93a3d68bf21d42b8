/** In-memory stand-in for the study service.
 *
 * Speaks the same JSON contract over a fetch-shaped function and
 * enforces the same rules: single-client session lock, pending-case
 * ordering, enum validation, clarity rules per arm, and idempotent
 * duplicate submissions. Arm assignment stays server-side, exactly as
 * in production: payloads never mention it, while `records` (this
 * fake's private ledger) keeps it for test assertions.
 */

import type { FetchLike } from "../src/api.js";
import type {
  AttributionBar,
  CasePayload,
  FeatureStats,
  ReviewAck,
  ScoreHistogram,
} from "../src/types.js";

export const ARMS = [
  "none",
  "fixed_zero",
  "fixed_mean",
  "uniform",
  "marginal",
  "joint_marginal",
  "conditional",
  "counterfactual",
  "filtered_conditional",
] as const;

export const EXPLANATION_ARMS = ARMS.slice(1);

const DECISIONS = ["risk", "no_risk"];
const CONFIDENCES = ["weak", "moderate", "strong"];

export interface FakeRecord {
  case_id: string;
  arm: string;
  decision: string;
  confidence: string;
  clarity: string;
  view_duration: number;
  flags: string[];
  record_index: number;
}

export interface LoggedRequest {
  method: string;
  path: string;
  body: unknown;
}

export interface FakeOptions {
  dataset?: string;
  nCases?: number;
  d?: number; // feature count, incl. one categorical when d >= 2
  controlAt?: number; // position of the control arm within the block
  failCreates?: number; // reject this many session creations first
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeStudyService {
  readonly dataset: string;
  readonly nCases: number;
  readonly d: number;
  readonly arms: string[];
  readonly records: FakeRecord[] = [];
  readonly requests: LoggedRequest[] = [];
  readonly fetch: FetchLike;

  cursor = 0;
  sessionId: string | null = null;
  clientToken: string | null = null;

  private failCreates: number;
  private readonly acks = new Map<string, ReviewAck>();
  private readonly served = new Set<string>();

  constructor(options: FakeOptions = {}) {
    this.dataset = options.dataset ?? "maternal";
    this.nCases = options.nCases ?? 9;
    this.d = options.d ?? 6;
    this.failCreates = options.failCreates ?? 0;
    const controlAt = options.controlAt ?? 4;
    const block = [...EXPLANATION_ARMS];
    block.splice(controlAt, 0, "none");
    this.arms = Array.from({ length: this.nCases }, (_, i) => block[i % block.length]);
    this.fetch = (input, init) => Promise.resolve(this.dispatch(input, init));
  }

  /** Register a session without going through POST /sessions, for
   * resume scenarios where the pointer predates the test. */
  adoptSession(sessionId: string, cursor = 0): void {
    this.sessionId = sessionId;
    this.cursor = cursor;
  }

  caseId(i: number): string {
    return `c${String(i).padStart(4, "0")}`;
  }

  // ---- routing -------------------------------------------------------------

  private dispatch(url: string, init?: RequestInit): Response {
    const method = init?.method ?? "GET";
    const path = url.split("?")[0];
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;
    this.requests.push({ method, path, body });

    if (method === "GET" && path === "/health") return this.health();
    if (method === "POST" && path === "/sessions") return this.createSession(body);
    const m = path.match(/^\/sessions\/([^/]+)\/(next|review)$/);
    if (m) {
      const token = this.headerToken(init);
      if (m[2] === "next" && method === "GET") return this.nextCase(m[1], token);
      if (m[2] === "review" && method === "POST") return this.submitReview(m[1], token, body);
    }
    return json(404, { schema_version: "v1", error: `no route for ${method} ${path}` });
  }

  private headerToken(init?: RequestInit): string | null {
    const headers = (init?.headers ?? {}) as Record<string, string>;
    for (const [k, v] of Object.entries(headers)) {
      if (k.toLowerCase() === "x-client-token") return v;
    }
    return null;
  }

  private health(): Response {
    return json(200, {
      schema_version: "v1",
      status: "ok",
      dataset: this.dataset,
      n_cases: this.nCases,
      records: this.records.length,
    });
  }

  private createSession(body: Record<string, unknown> | null): Response {
    if (this.failCreates > 0) {
      this.failCreates -= 1;
      return json(503, { schema_version: "v1", error: "service warming up, try again" });
    }
    if (!body) return json(422, { schema_version: "v1", error: "malformed session request" });
    if (body.dataset !== this.dataset) {
      return json(409, {
        schema_version: "v1",
        error: `unknown dataset ${String(body.dataset)}; serving ${this.dataset}`,
      });
    }
    if (
      typeof body.analyst_id !== "string" ||
      body.analyst_id === "" ||
      typeof body.professional !== "boolean" ||
      !["low", "moderate", "high"].includes(body.ml_knowledge as string) ||
      !["yes", "no"].includes(body.shapley_familiarity as string) ||
      !["yes", "no"].includes(body.domain_knowledge as string) ||
      !Number.isInteger(body.seed)
    ) {
      return json(422, { schema_version: "v1", error: "malformed session request" });
    }
    this.sessionId = "s00001-feedcafe";
    this.cursor = 0;
    return json(200, {
      schema_version: "v1",
      session_id: this.sessionId,
      n_cases: this.nCases,
      dataset: this.dataset,
    });
  }

  private checkSession(sessionId: string, token: string | null): Response | null {
    if (this.sessionId === null || sessionId !== this.sessionId) {
      return json(404, { schema_version: "v1", error: `unknown session ${sessionId}` });
    }
    if (token !== null) {
      if (this.clientToken === null) this.clientToken = token;
      else if (this.clientToken !== token) {
        return json(409, { schema_version: "v1", error: "session is locked by another client" });
      }
    }
    return null;
  }

  private nextCase(sessionId: string, token: string | null): Response {
    const bad = this.checkSession(sessionId, token);
    if (bad) return bad;
    if (this.cursor >= this.nCases) {
      return json(200, { schema_version: "v1", done: true, n_reviewed: this.nCases });
    }
    this.served.add(this.caseId(this.cursor));
    return json(200, this.buildPayload(this.cursor));
  }

  private submitReview(
    sessionId: string,
    token: string | null,
    body: Record<string, unknown> | null,
  ): Response {
    const bad = this.checkSession(sessionId, token);
    if (bad) return bad;
    if (!body) return json(422, { schema_version: "v1", error: "malformed review request" });

    const caseId = (body.case_id as string) ?? this.caseId(this.cursor);
    const stored = this.acks.get(caseId);
    if (stored) return json(200, { ...stored, duplicate: true });

    if (this.cursor >= this.nCases) {
      return json(409, { schema_version: "v1", error: "session already complete" });
    }
    const pending = this.caseId(this.cursor);
    if (caseId !== pending) {
      return json(409, { schema_version: "v1", error: `case ${caseId} is not the pending case` });
    }
    if (!this.served.has(pending)) {
      return json(409, { schema_version: "v1", error: "case was never served" });
    }

    const arm = this.arms[this.cursor];
    const decision = body.decision as string;
    const confidence = body.confidence as string;
    let clarity = body.clarity as string | null;
    const duration = body.view_duration;
    if (!DECISIONS.includes(decision)) {
      return json(422, { schema_version: "v1", error: "decision must be risk or no_risk" });
    }
    if (!CONFIDENCES.includes(confidence)) {
      return json(422, { schema_version: "v1", error: "confidence must be weak, moderate, or strong" });
    }
    if (arm === "none") {
      if (clarity !== null && clarity !== "not_applicable") {
        return json(422, { schema_version: "v1", error: "clarity does not apply to the control arm" });
      }
      clarity = "not_applicable";
    } else if (clarity !== "clear" && clarity !== "confusing") {
      return json(422, { schema_version: "v1", error: "clarity must be clear or confusing" });
    }
    if (typeof duration !== "number" || !(duration >= 0)) {
      return json(422, { schema_version: "v1", error: "view duration must be a non-negative number" });
    }

    const flags: string[] = [];
    if (body.reloaded === true) flags.push("reloaded");
    const record: FakeRecord = {
      case_id: pending,
      arm,
      decision,
      confidence,
      clarity,
      view_duration: duration,
      flags,
      record_index: this.records.length,
    };
    this.records.push(record);
    this.cursor += 1;
    const ack: ReviewAck = {
      schema_version: "v1",
      record_index: record.record_index,
      duplicate: false,
      remaining: this.nCases - this.cursor,
    };
    this.acks.set(pending, ack);
    return json(200, ack);
  }

  // ---- payload synthesis -----------------------------------------------------

  featureNames(): string[] {
    if (this.d <= 1) return ["num_0"].slice(0, this.d);
    const names = Array.from({ length: this.d - 1 }, (_, j) => `num_${j}`);
    names.push("segment");
    return names;
  }

  /** Deterministic attribution vector for a case; tests recompute the
   * expected top-4 from this. */
  phiFor(caseIndex: number): number[] {
    const rng = mulberry32(7000 + caseIndex);
    return Array.from({ length: this.d }, () => Math.round((rng() - 0.5) * 2000) / 10000);
  }

  buildPayload(caseIndex: number): CasePayload {
    const rng = mulberry32(1000 + caseIndex);
    const names = this.featureNames();
    const levels = ["alpha", "beta", "gamma"];
    const features: Record<string, number | string> = {};
    const feature_stats: Record<string, FeatureStats> = {};
    for (const name of names) {
      if (name === "segment") {
        features[name] = levels[caseIndex % levels.length];
        feature_stats[name] = {
          kind: "categorical",
          levels: [
            { level: "alpha", prevalence: 0.2, mean_label: 0.1 },
            { level: "beta", prevalence: 0.3, mean_label: 0.3 },
            { level: "gamma", prevalence: 0.5, mean_label: 0.6 },
          ],
        };
      } else {
        features[name] = Math.round(rng() * 1000) / 100;
        feature_stats[name] = { kind: "numeric", quartiles: [0, 2.5, 5, 7.5, 10] };
      }
    }
    const score = Math.round((0.05 + 0.9 * rng()) * 1e6) / 1e6;
    const edges = Array.from({ length: 21 }, (_, i) => Math.round(i * 0.05 * 1e6) / 1e6);
    const histogram: ScoreHistogram = {
      bin_edges: edges,
      counts: Array.from({ length: 20 }, (_, i) => ((i * 7 + caseIndex) % 13) + 1),
    };
    const arm = this.arms[caseIndex];
    const payload: CasePayload = {
      schema_version: "v1",
      done: false,
      case_id: this.caseId(caseIndex),
      position: caseIndex,
      total: this.nCases,
      model_score: score,
      score_percentile: Math.round(score * 10000) / 100,
      score_histogram: histogram,
      threshold: 0.5,
      features,
      feature_stats,
      explanation: null,
    };
    if (arm !== "none") {
      const phi = this.phiFor(caseIndex);
      const order = phi
        .map((v, j) => j)
        .sort((a, b) => Math.abs(phi[b]) - Math.abs(phi[a]))
        .slice(0, Math.min(4, this.d));
      const bars: AttributionBar[] = order.map((j) => ({ feature: names[j], phi: phi[j] }));
      payload.explanation = {
        bars,
        reason_codes: bars.map(
          (b) =>
            `${b.feature} value of ${String(features[b.feature])} is ` +
            `${b.phi >= 0 ? "raising" : "lowering"} the score`,
        ),
        phi,
        base_value: 0.3,
      };
    }
    return payload;
  }
}
