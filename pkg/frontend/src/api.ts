/** Typed client for the study service.
 *
 * This is the app's only network surface. Every method maps one to one
 * onto a service endpoint; errors carry the HTTP status plus the
 * server's message so screens can show an actionable banner.
 */

import type {
  AnalystProfile,
  HealthInfo,
  NextResponse,
  ReviewAck,
  ReviewSubmission,
  SessionCreated,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: unknown };
    if (typeof body.error === "string" && body.error) return body.error;
  } catch {
    // non-JSON error body, fall through to the generic message
  }
  return `request failed with status ${resp.status}`;
}

export class StudyApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return (await resp.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  createSession(profile: AnalystProfile, dataset: string, seed: number): Promise<SessionCreated> {
    return this.request<SessionCreated>("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...profile, dataset, seed }),
    });
  }

  nextCase(sessionId: string, clientToken: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/sessions/${encodeURIComponent(sessionId)}/next`, {
      headers: { "X-Client-Token": clientToken },
    });
  }

  submitReview(
    sessionId: string,
    clientToken: string,
    submission: ReviewSubmission,
  ): Promise<ReviewAck> {
    return this.request<ReviewAck>(`/sessions/${encodeURIComponent(sessionId)}/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-Client-Token": clientToken },
      body: JSON.stringify(submission),
    });
  }
}
