/** Wire types for the study service JSON API.
 *
 * Field names mirror the server's payloads exactly; the client renders
 * these numbers and strings verbatim and never derives anything the
 * service did not send. In particular no payload carries the assignment
 * arm, so nothing in this file (or the app) can leak it.
 */

export const DATASETS = ["maternal", "credit", "adult", "heloc"] as const;

export const ML_KNOWLEDGE = ["low", "moderate", "high"] as const;
export const YESNO = ["yes", "no"] as const;
export const DECISIONS = ["risk", "no_risk"] as const;
export const CONFIDENCES = ["weak", "moderate", "strong"] as const;
export const CLARITIES = ["clear", "confusing"] as const;

export type MlKnowledge = (typeof ML_KNOWLEDGE)[number];
export type YesNo = (typeof YESNO)[number];
export type Decision = (typeof DECISIONS)[number];
export type Confidence = (typeof CONFIDENCES)[number];
export type Clarity = (typeof CLARITIES)[number];

export interface AnalystProfile {
  analyst_id: string;
  professional: boolean;
  ml_knowledge: MlKnowledge;
  shapley_familiarity: YesNo;
  domain_knowledge: YesNo;
}

export interface SessionCreated {
  schema_version: string;
  session_id: string;
  n_cases: number;
  dataset: string;
}

export interface HealthInfo {
  schema_version: string;
  status: string;
  dataset: string;
  n_cases: number;
  records: number;
}

export interface ScoreHistogram {
  bin_edges: number[];
  counts: number[];
}

export interface AttributionBar {
  feature: string;
  phi: number;
}

export interface ExplanationBlock {
  bars: AttributionBar[];
  reason_codes: string[];
  phi: number[];
  base_value: number;
}

export interface NumericStats {
  kind: "numeric";
  quartiles: number[]; // min, q1, median, q3, max
}

export interface CategoricalLevel {
  level: string;
  prevalence: number;
  mean_label: number;
}

export interface CategoricalStats {
  kind: "categorical";
  levels: CategoricalLevel[];
}

export type FeatureStats = NumericStats | CategoricalStats;

export interface CasePayload {
  schema_version: string;
  done: false;
  case_id: string;
  position: number;
  total: number;
  model_score: number;
  score_percentile: number;
  score_histogram: ScoreHistogram;
  threshold: number;
  features: Record<string, number | string>;
  feature_stats: Record<string, FeatureStats>;
  explanation: ExplanationBlock | null;
}

export interface SessionDone {
  schema_version: string;
  done: true;
  n_reviewed: number;
}

export type NextResponse = CasePayload | SessionDone;

export interface ReviewSubmission {
  decision: Decision;
  confidence: Confidence;
  clarity: Clarity | null; // null on screens without an explanation block
  view_duration: number; // seconds from case render to final submit
  case_id: string;
  reloaded: boolean;
}

export interface ReviewAck {
  schema_version: string;
  record_index: number;
  duplicate: boolean;
  remaining: number;
}
