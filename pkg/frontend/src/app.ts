/** Screen controller.
 *
 * Owns the session lifecycle: onboarding, the per-case feedback cycle,
 * and completion. Exactly one case is pending at any time and the
 * server decides which; the client holds only a session pointer
 * (session id plus this tab's token), so a reload rebuilds every
 * screen from the service and nothing stale can be shown. The pointer
 * lives in per-tab storage: a fresh tab gets a fresh token and the
 * server's session lock rejects it, which keeps one tab per session.
 */

import { ApiError, StudyApi } from "./api.js";
import {
  renderClarityModal,
  renderConfidenceModal,
  renderDecisionModal,
  renderDoneScreen,
  renderOnboarding,
  renderReviewScreen,
  renderSummaryScreen,
  showErrorBanner,
  type OnboardingResult,
} from "./screens.js";
import { SessionFlow } from "./state.js";
import type { CasePayload, Clarity, Confidence, Decision } from "./types.js";
import { DATASETS } from "./types.js";

const STORAGE_KEY = "review-session";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

interface SessionPointer {
  sessionId: string;
  clientToken: string;
}

export interface AppOptions {
  storage?: StorageLike;
  now?: () => number;
}

function randomToken(): string {
  const c = globalThis.crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return "tok-" + Math.random().toString(16).slice(2) + Date.now().toString(16);
}

export class App {
  readonly flow = new SessionFlow();

  private readonly storage: StorageLike | null;
  private readonly now: () => number;
  private session: SessionPointer | null = null;
  private dataset = "";
  private payload: CasePayload | null = null;
  private renderedAt = 0;
  private decision: Decision | null = null;
  private confidence: Confidence | null = null;
  private submitting = false;
  // set when this boot restored a stored pointer; the first record it
  // submits is flagged so the restarted timer is visible downstream
  private pendingReloaded = false;
  private inflight: Promise<void> = Promise.resolve();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: StudyApi,
    options: AppOptions = {},
  ) {
    this.storage = options.storage ?? null;
    this.now = options.now ?? (() => Date.now());
  }

  /** Await every handler the UI has kicked off; tests drive clicks and
   * then settle. */
  async settle(): Promise<void> {
    let previous;
    do {
      previous = this.inflight;
      await previous;
    } while (previous !== this.inflight);
  }

  private track(work: Promise<void>): void {
    this.inflight = this.inflight.then(() => work.catch(() => undefined));
  }

  async start(): Promise<void> {
    const stored = this.loadPointer();
    if (stored === null) {
      renderOnboarding(this.root, DATASETS, (result) => {
        this.track(this.createSession(result));
      });
      return;
    }
    this.session = stored;
    this.pendingReloaded = true;
    try {
      this.dataset = (await this.api.health()).dataset;
    } catch {
      this.dataset = ""; // summary falls back to generic copy
    }
    this.flow.resume();
    await this.fetchAndShow();
  }

  // ---- session creation --------------------------------------------------

  private async createSession(result: OnboardingResult): Promise<void> {
    let created;
    try {
      created = await this.api.createSession(result.profile, result.dataset, result.seed);
    } catch (err) {
      showErrorBanner(this.root, this.describe(err));
      return; // form stays up, the analyst can retry
    }
    this.session = { sessionId: created.session_id, clientToken: randomToken() };
    this.savePointer();
    this.dataset = result.dataset;
    this.flow.beginSession();
    renderSummaryScreen(this.root, this.dataset, () => {
      this.track(this.beginLoop());
    });
  }

  private async beginLoop(): Promise<void> {
    if (this.flow.step !== "summary") return;
    this.flow.beginReview();
    await this.fetchAndShow();
  }

  // ---- review loop ---------------------------------------------------------

  private async fetchAndShow(): Promise<void> {
    const session = this.session!;
    let next;
    try {
      next = await this.api.nextCase(session.sessionId, session.clientToken);
    } catch (err) {
      this.root.innerHTML = '<div class="error-banner"></div>';
      showErrorBanner(this.root, this.describe(err));
      return;
    }
    if (next.done) {
      this.flow.finishSession();
      this.clearPointer();
      renderDoneScreen(this.root, next.n_reviewed);
      return;
    }
    this.payload = next;
    this.renderedAt = this.now(); // the view timer starts at render
    renderReviewScreen(this.root, next, this.dataset, () => this.onProceed());
  }

  private onProceed(): void {
    if (this.flow.step !== "review" || this.payload === null) return;
    this.flow.openDecision();
    renderDecisionModal(this.root, (decision) => this.onDecision(decision));
  }

  private onDecision(decision: Decision): void {
    if (this.flow.step !== "decision") return;
    this.decision = decision;
    this.flow.openConfidence();
    renderConfidenceModal(this.root, (confidence) => this.onConfidence(confidence));
  }

  private onConfidence(confidence: Confidence): void {
    if (this.flow.step !== "confidence") return;
    this.confidence = confidence;
    if (this.payload!.explanation !== null) {
      this.flow.openClarity(true);
      renderClarityModal(this.root, (clarity) => {
        this.track(this.submitCase(clarity));
      });
    } else {
      this.track(this.submitCase(null)); // control case: no clarity question
    }
  }

  private async submitCase(clarity: Clarity | null): Promise<void> {
    if (this.submitting) return;
    const step = this.flow.step;
    if (step !== "confidence" && step !== "clarity") return;
    this.submitting = true;
    const session = this.session!;
    const payload = this.payload!;
    const reloaded = this.pendingReloaded;
    try {
      await this.api.submitReview(session.sessionId, session.clientToken, {
        decision: this.decision!,
        confidence: this.confidence!,
        clarity,
        view_duration: (this.now() - this.renderedAt) / 1000,
        case_id: payload.case_id,
        reloaded,
      });
    } catch (err) {
      this.submitting = false;
      showErrorBanner(this.root, this.describe(err));
      // bring the last question's buttons back so a re-click retries
      this.root
        .querySelectorAll<HTMLButtonElement>(".modal-overlay button.choice")
        .forEach((b) => {
          b.disabled = false;
        });
      return;
    }
    this.submitting = false;
    this.pendingReloaded = false;
    this.decision = null;
    this.confidence = null;
    this.flow.completeCase();
    await this.fetchAndShow();
  }

  // ---- small helpers -------------------------------------------------------

  private describe(err: unknown): string {
    if (err instanceof ApiError) return err.message;
    return "could not reach the study service; check the connection and retry";
  }

  private loadPointer(): SessionPointer | null {
    if (this.storage === null) return null;
    const raw = this.storage.getItem(STORAGE_KEY);
    if (raw === null) return null;
    try {
      const parsed = JSON.parse(raw) as Partial<SessionPointer>;
      if (typeof parsed.sessionId === "string" && typeof parsed.clientToken === "string") {
        return { sessionId: parsed.sessionId, clientToken: parsed.clientToken };
      }
    } catch {
      // corrupted pointer: treat as absent
    }
    this.storage.removeItem(STORAGE_KEY);
    return null;
  }

  private savePointer(): void {
    if (this.storage !== null && this.session !== null) {
      this.storage.setItem(STORAGE_KEY, JSON.stringify(this.session));
    }
  }

  private clearPointer(): void {
    if (this.storage !== null) this.storage.removeItem(STORAGE_KEY);
  }
}

/** Browser entry point: same-origin service, per-tab storage. */
export function boot(root: HTMLElement, base = ""): App {
  const app = new App(root, new StudyApi(base), { storage: window.sessionStorage });
  void app.start();
  return app;
}
