/** Screen renderers.
 *
 * Each function replaces the root's content with one screen and wires
 * its controls to callbacks; no screen keeps state of its own. The
 * review screen renders three blocks (model output, explanation panel,
 * data explorer) and omits the explanation panel entirely when the
 * payload carries none, so a control case shows no trace of it.
 */

import { attributionBarChart, quartileStrip, scoreDistributionChart } from "./charts.js";
import { esc, fmtPercent, fmtPercentile, fmtScore, fmtValue } from "./format.js";
import { summaryPanelHtml } from "./summaries.js";
import type {
  AnalystProfile,
  CasePayload,
  Clarity,
  Confidence,
  Decision,
  FeatureStats,
  MlKnowledge,
  YesNo,
} from "./types.js";
import { CLARITIES, CONFIDENCES, DECISIONS, ML_KNOWLEDGE, YESNO } from "./types.js";

export interface OnboardingResult {
  profile: AnalystProfile;
  dataset: string;
  seed: number;
}

function option(value: string, label: string): string {
  return `<option value="${esc(value)}">${esc(label)}</option>`;
}

function select(id: string, label: string, values: readonly string[]): string {
  const opts = ['<option value="">choose…</option>', ...values.map((v) => option(v, v))];
  return (
    `<label class="field">${esc(label)}` +
    `<select id="${id}">${opts.join("")}</select></label>`
  );
}

/** Write into the innermost banner so a message raised while a modal is
 * open lands inside that modal. */
export function showErrorBanner(root: HTMLElement, message: string): void {
  const banners = root.querySelectorAll<HTMLElement>(".error-banner");
  const banner = banners[banners.length - 1];
  if (banner) {
    banner.textContent = message;
    banner.hidden = false;
  }
}

/** Dataset choice plus analyst profile. The submit button stays
 * disabled until every field is filled; a server refusal surfaces in
 * the banner and the form stays editable for retry. */
export function renderOnboarding(
  root: HTMLElement,
  datasets: readonly string[],
  onSubmit: (result: OnboardingResult) => void,
): void {
  root.innerHTML = `
    <section class="screen onboarding">
      <h1>Case review study</h1>
      <p>Select the dataset for this session and tell us about your background.
         These answers are used only for later stratified analysis.</p>
      <div class="error-banner" hidden></div>
      <form id="onboarding-form">
        <label class="field">participant id
          <input id="f-analyst" type="text" autocomplete="off"></label>
        <label class="field">assignment code (from your study coordinator)
          <input id="f-seed" type="text" inputmode="numeric" autocomplete="off"></label>
        ${select("f-dataset", "dataset", datasets)}
        ${select("f-professional", "do you review cases like these professionally?", YESNO)}
        ${select("f-ml", "general machine learning knowledge", ML_KNOWLEDGE)}
        ${select("f-shap", "have you worked with feature attribution explanations?", YESNO)}
        ${select("f-domain", "do you have domain knowledge for this dataset?", YESNO)}
        <button id="f-submit" type="submit" disabled>Start session</button>
      </form>
    </section>`;

  const form = root.querySelector<HTMLFormElement>("#onboarding-form")!;
  const submit = root.querySelector<HTMLButtonElement>("#f-submit")!;
  const field = <T extends HTMLElement>(id: string): T => root.querySelector<T>("#" + id)!;

  const read = (): OnboardingResult | null => {
    const analyst = field<HTMLInputElement>("f-analyst").value.trim();
    const seedRaw = field<HTMLInputElement>("f-seed").value.trim();
    const dataset = field<HTMLSelectElement>("f-dataset").value;
    const professional = field<HTMLSelectElement>("f-professional").value;
    const ml = field<HTMLSelectElement>("f-ml").value;
    const shap = field<HTMLSelectElement>("f-shap").value;
    const domain = field<HTMLSelectElement>("f-domain").value;
    const seed = Number(seedRaw);
    if (!analyst || seedRaw === "" || !Number.isInteger(seed) || seed < 0) return null;
    if (!dataset || !professional || !ml || !shap || !domain) return null;
    return {
      profile: {
        analyst_id: analyst,
        professional: professional === "yes",
        ml_knowledge: ml as MlKnowledge,
        shapley_familiarity: shap as YesNo,
        domain_knowledge: domain as YesNo,
      },
      dataset,
      seed,
    };
  };

  const refresh = (): void => {
    submit.disabled = read() === null;
  };
  form.addEventListener("input", refresh);
  form.addEventListener("change", refresh);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const result = read();
    if (result) onSubmit(result);
  });
}

/** Full-page task summary shown once, before the first case. */
export function renderSummaryScreen(
  root: HTMLElement,
  dataset: string,
  onBegin: () => void,
): void {
  root.innerHTML = `
    <section class="screen summary">
      <h1>Task summary</h1>
      <div class="summary-content">${summaryPanelHtml(dataset)}</div>
      <p>This panel stays available on every case. Reviews are sequential:
         once you submit a decision you cannot return to an earlier case.</p>
      <button id="begin-review">Begin review</button>
    </section>`;
  root.querySelector<HTMLButtonElement>("#begin-review")!.addEventListener("click", onBegin);
}

function featureRow(name: string, value: number | string, stats: FeatureStats | undefined): string {
  let context = "";
  if (stats && stats.kind === "numeric" && typeof value === "number") {
    const q = stats.quartiles;
    context =
      quartileStrip(q, value) +
      `<span class="quartile-text">min ${fmtValue(q[0])} / median ${fmtValue(q[2])} / max ${fmtValue(q[4])}</span>`;
  } else if (stats && stats.kind === "categorical") {
    const rows = stats.levels
      .map((lv) => {
        const current = String(value) === lv.level ? ' class="current-level"' : "";
        return (
          `<tr${current}><td>${esc(lv.level)}</td>` +
          `<td>${fmtPercent(lv.prevalence)}</td>` +
          `<td>${fmtPercent(lv.mean_label)}</td></tr>`
        );
      })
      .join("");
    context =
      '<table class="level-table"><thead><tr><th>level</th><th>share</th>' +
      "<th>historical risk</th></tr></thead><tbody>" +
      rows +
      "</tbody></table>";
  }
  return (
    `<tr class="feature-row" data-feature="${esc(name)}">` +
    `<th scope="row">${esc(name)}</th>` +
    `<td class="feature-value">${esc(fmtValue(value))}</td>` +
    `<td class="feature-context">${context}</td></tr>`
  );
}

/** The case screen: model output, optional explanation panel, data
 * explorer, and the confirm button that opens the feedback sequence. */
export function renderReviewScreen(
  root: HTMLElement,
  payload: CasePayload,
  dataset: string,
  onProceed: () => void,
): void {
  const explorerRows = Object.entries(payload.features)
    .map(([name, value]) => featureRow(name, value, payload.feature_stats[name]))
    .join("");

  const explanation = payload.explanation
    ? `
      <section class="block explanation-panel">
        <h2>Why this score</h2>
        ${attributionBarChart(payload.explanation.bars)}
        <ul class="reason-codes">
          ${payload.explanation.reason_codes.map((rc) => `<li>${esc(rc)}</li>`).join("")}
        </ul>
      </section>`
    : "";

  root.innerHTML = `
    <section class="screen review">
      <header class="case-header">
        <h1>Case ${payload.position + 1} of ${payload.total}</h1>
        <span class="case-id">${esc(payload.case_id)}</span>
      </header>
      <div class="error-banner" hidden></div>
      <details class="summary-panel">
        <summary>Task summary</summary>
        <div class="summary-content">${summaryPanelHtml(dataset)}</div>
      </details>
      <section class="block model-output">
        <h2>Model output</h2>
        <p class="score-line">
          score <strong class="score">${fmtScore(payload.model_score)}</strong>,
          percentile <span class="percentile">${fmtPercentile(payload.score_percentile)}</span>,
          threshold <span class="threshold">${fmtValue(payload.threshold)}</span>
        </p>
        ${scoreDistributionChart(payload.score_histogram, payload.model_score, payload.threshold)}
      </section>
      ${explanation}
      <section class="block data-explorer">
        <h2>Data explorer</h2>
        <table class="explorer-table">
          <thead><tr><th>feature</th><th>value</th><th>context</th></tr></thead>
          <tbody>${explorerRows}</tbody>
        </table>
      </section>
      <footer class="case-footer">
        <button id="proceed-decision">Make a decision</button>
      </footer>
    </section>`;
  root
    .querySelector<HTMLButtonElement>("#proceed-decision")!
    .addEventListener("click", onProceed);
}

function renderChoiceModal(
  root: HTMLElement,
  kind: string,
  question: string,
  choices: readonly { value: string; label: string }[],
  onChoose: (value: string) => void,
): void {
  const old = root.querySelector(".modal-overlay");
  if (old) old.remove();
  const overlay = document.createElement("div");
  overlay.className = `modal-overlay modal-${kind}`;
  overlay.innerHTML = `
    <div class="modal" role="dialog" aria-label="${esc(question)}">
      <p class="modal-question">${esc(question)}</p>
      <div class="error-banner" hidden></div>
      <div class="modal-choices">
        ${choices
          .map(
            (c) =>
              `<button class="choice" data-value="${esc(c.value)}">${esc(c.label)}</button>`,
          )
          .join("")}
      </div>
    </div>`;
  overlay.querySelectorAll<HTMLButtonElement>("button.choice").forEach((btn) => {
    btn.addEventListener("click", () => {
      // one answer per question: every button dies on the first click
      overlay.querySelectorAll<HTMLButtonElement>("button.choice").forEach((b) => {
        b.disabled = true;
      });
      onChoose(btn.dataset.value!);
    });
  });
  root.appendChild(overlay);
}

export function renderDecisionModal(
  root: HTMLElement,
  onChoose: (decision: Decision) => void,
): void {
  renderChoiceModal(
    root,
    "decision",
    "What is your decision for this case?",
    [
      { value: DECISIONS[0], label: "Risk" },
      { value: DECISIONS[1], label: "No Risk" },
    ],
    (v) => onChoose(v as Decision),
  );
}

export function renderConfidenceModal(
  root: HTMLElement,
  onChoose: (confidence: Confidence) => void,
): void {
  renderChoiceModal(
    root,
    "confidence",
    "How confident are you in this decision?",
    [
      { value: CONFIDENCES[0], label: "Weak" },
      { value: CONFIDENCES[1], label: "Moderate" },
      { value: CONFIDENCES[2], label: "Strong" },
    ],
    (v) => onChoose(v as Confidence),
  );
}

export function renderClarityModal(
  root: HTMLElement,
  onChoose: (clarity: Clarity) => void,
): void {
  renderChoiceModal(
    root,
    "clarity",
    "How would you rate the explanation shown for this case?",
    [
      { value: CLARITIES[0], label: "Clear" },
      { value: CLARITIES[1], label: "Confusing" },
    ],
    (v) => onChoose(v as Clarity),
  );
}

export function renderDoneScreen(root: HTMLElement, nReviewed: number): void {
  root.innerHTML = `
    <section class="screen done">
      <h1>Session complete</h1>
      <p>You reviewed <strong>${nReviewed}</strong> cases. Thank you; you can
         close this tab.</p>
    </section>`;
}
