/** Shared test drivers: an in-memory per-tab storage, a hand-cranked
 * clock, and DOM helpers that walk the app through its screens the way
 * a person would (fill fields, click buttons, wait for the app to
 * settle). */

import { expect } from "vitest";
import type { App, StorageLike } from "../src/app.js";

export function memStorage(): StorageLike & { dump(): Record<string, string> } {
  const store = new Map<string, string>();
  return {
    getItem: (k) => (store.has(k) ? store.get(k)! : null),
    setItem: (k, v) => void store.set(k, v),
    removeItem: (k) => void store.delete(k),
    dump: () => Object.fromEntries(store),
  };
}

export interface TestClock {
  now(): number;
  advance(ms: number): void;
}

export function testClock(start = 1_700_000_000_000): TestClock {
  let t = start;
  return {
    now: () => t,
    advance: (ms) => {
      t += ms;
    },
  };
}

export function appRoot(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.querySelector<HTMLElement>("#app")!;
}

export function setInput(root: HTMLElement, selector: string, value: string): void {
  const el = root.querySelector<HTMLInputElement>(selector);
  expect(el, selector).not.toBeNull();
  el!.value = value;
  el!.dispatchEvent(new Event("input", { bubbles: true }));
}

export function setSelect(root: HTMLElement, selector: string, value: string): void {
  const el = root.querySelector<HTMLSelectElement>(selector);
  expect(el, selector).not.toBeNull();
  el!.value = value;
  el!.dispatchEvent(new Event("change", { bubbles: true }));
}

export function click(root: HTMLElement, selector: string): void {
  const el = root.querySelector<HTMLElement>(selector);
  expect(el, selector).not.toBeNull();
  el!.click();
}

export interface OnboardingFields {
  analyst?: string;
  seed?: string;
  dataset?: string;
  professional?: string;
  ml?: string;
  shap?: string;
  domain?: string;
}

export function fillOnboarding(root: HTMLElement, fields: OnboardingFields = {}): void {
  setInput(root, "#f-analyst", fields.analyst ?? "analyst-01");
  setInput(root, "#f-seed", fields.seed ?? "7");
  setSelect(root, "#f-dataset", fields.dataset ?? "maternal");
  setSelect(root, "#f-professional", fields.professional ?? "yes");
  setSelect(root, "#f-ml", fields.ml ?? "moderate");
  setSelect(root, "#f-shap", fields.shap ?? "yes");
  setSelect(root, "#f-domain", fields.domain ?? "no");
}

export async function submitOnboarding(app: App, root: HTMLElement): Promise<void> {
  const btn = root.querySelector<HTMLButtonElement>("#f-submit")!;
  expect(btn.disabled).toBe(false);
  btn.click();
  await app.settle();
}

/** From the summary screen into the first case. */
export async function beginReview(app: App, root: HTMLElement): Promise<void> {
  click(root, "#begin-review");
  await app.settle();
}

export interface CaseAnswers {
  decision?: "risk" | "no_risk";
  confidence?: "weak" | "moderate" | "strong";
  clarity?: "clear" | "confusing";
  dwellMs?: number;
}

/** Answer the currently shown case end to end. Asserts the clarity
 * question appears exactly when the case carried an explanation block,
 * and returns whether it did. */
export async function answerCase(
  app: App,
  root: HTMLElement,
  clock: TestClock,
  answers: CaseAnswers = {},
): Promise<{ hadExplanation: boolean }> {
  const hadExplanation = root.querySelector(".explanation-panel") !== null;
  clock.advance(answers.dwellMs ?? 1500);
  click(root, "#proceed-decision");
  click(root, `.modal-decision button[data-value="${answers.decision ?? "risk"}"]`);
  click(root, `.modal-confidence button[data-value="${answers.confidence ?? "moderate"}"]`);
  if (hadExplanation) {
    const clarityModal = root.querySelector(".modal-clarity");
    expect(clarityModal, "clarity question after an explanation").not.toBeNull();
    click(root, `.modal-clarity button[data-value="${answers.clarity ?? "clear"}"]`);
  } else {
    expect(root.querySelector(".modal-clarity")).toBeNull();
  }
  await app.settle();
  return { hadExplanation };
}
