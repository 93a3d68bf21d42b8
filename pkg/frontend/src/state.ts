/** Session step machine.
 *
 * The workflow is strictly linear: onboarding, task summary, then a
 * review loop where each case walks review -> decision -> confidence
 * -> clarity before the next case appears. Every transition below moves
 * forward; the only way back to a review screen is completeCase(),
 * which starts the NEXT case. There is deliberately no undo, no skip,
 * and no way to reopen an earlier question.
 */

export type Step =
  | "onboarding"
  | "summary"
  | "review"
  | "decision"
  | "confidence"
  | "clarity"
  | "done";

export class FlowError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FlowError";
  }
}

export class SessionFlow {
  private current: Step = "onboarding";

  get step(): Step {
    return this.current;
  }

  private move(from: readonly Step[], to: Step): void {
    if (!from.includes(this.current)) {
      throw new FlowError(`cannot move from ${this.current} to ${to}`);
    }
    this.current = to;
  }

  /** Profile accepted by the server; show the task summary. */
  beginSession(): void {
    this.move(["onboarding"], "summary");
  }

  /** Summary acknowledged; enter the review loop. */
  beginReview(): void {
    this.move(["summary"], "review");
  }

  /** Rebuilt from a stored session pointer: skip straight to the loop.
   * Still a forward move, the earlier screens were completed before
   * the reload. */
  resume(): void {
    this.move(["onboarding"], "review");
  }

  openDecision(): void {
    this.move(["review"], "decision");
  }

  openConfidence(): void {
    this.move(["decision"], "confidence");
  }

  /** Clarity only exists when the case carried an explanation block;
   * control screens submit straight from the confidence step. */
  openClarity(hasExplanation: boolean): void {
    if (!hasExplanation) {
      throw new FlowError("clarity step does not apply without an explanation");
    }
    this.move(["confidence"], "clarity");
  }

  /** Final answer submitted; rewind the per-case cycle for the next one. */
  completeCase(): void {
    this.move(["confidence", "clarity"], "review");
  }

  /** The service reported the session exhausted. */
  finishSession(): void {
    this.move(["review"], "done");
  }
}
