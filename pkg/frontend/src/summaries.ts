/** Standardized task summaries, one per dataset.
 *
 * Every analyst reviewing a given dataset reads the same objective,
 * the same feature definitions (with categorical levels spelled out),
 * and the same operational meaning of a positive call, regardless of
 * which condition their session was assigned. The copy below is static
 * on purpose: it depends only on the dataset id.
 */

import { esc } from "./format.js";

export interface TaskSummary {
  title: string;
  objective: string;
  riskMeaning: string;
  features: { name: string; definition: string }[];
}

export const TASK_SUMMARIES: Record<string, TaskSummary> = {
  maternal: {
    title: "Maternal health risk",
    objective:
      "The model scores the probability that a pregnancy presents an elevated " +
      "health risk, using six routine vital-sign measurements taken at intake.",
    riskMeaning:
      "A positive call flags the patient for prioritized clinical follow-up. " +
      "A negative call keeps the patient on the standard monitoring schedule.",
    features: [
      { name: "age", definition: "patient age in years" },
      { name: "systolic_bp", definition: "systolic blood pressure, mmHg" },
      { name: "diastolic_bp", definition: "diastolic blood pressure, mmHg" },
      { name: "blood_glucose", definition: "blood glucose concentration, mmol/L" },
      { name: "body_temp", definition: "body temperature, degrees Fahrenheit" },
      { name: "heart_rate", definition: "resting heart rate, beats per minute" },
    ],
  },
  credit: {
    title: "Consumer credit default risk",
    objective:
      "The model scores the probability that a loan applicant will default, " +
      "from twenty financial and demographic attributes recorded at application time.",
    riskMeaning:
      "A positive call recommends declining the application or requesting " +
      "additional collateral. A negative call recommends approval on standard terms.",
    features: [
      { name: "duration_months", definition: "requested loan term in months" },
      { name: "credit_amount", definition: "requested principal" },
      { name: "age_years", definition: "applicant age in years" },
      { name: "installment_pct", definition: "installment as a percentage of disposable income (1 to 4)" },
      { name: "residence_years", definition: "years at the current residence (1 to 4)" },
      { name: "existing_credits", definition: "number of open credit lines at this bank (1 to 4)" },
      { name: "dependents", definition: "number of financial dependents (1 or 2)" },
      { name: "monthly_income", definition: "self-reported net monthly income" },
      { name: "utilization", definition: "share of existing revolving credit in use, 0 to 1" },
      {
        name: "checking_status",
        definition: "checking account standing: none, overdrawn, low, or healthy",
      },
      {
        name: "credit_history",
        definition:
          "repayment track record: no_credits, all_paid, existing_paid, delayed, or critical",
      },
      {
        name: "purpose",
        definition:
          "stated loan purpose: car_new, car_used, furniture, electronics, appliances, " +
          "repairs, education, retraining, business, or other",
      },
      {
        name: "savings_status",
        definition: "savings balance band: unknown, minimal, modest, comfortable, or substantial",
      },
      {
        name: "employment_since",
        definition: "tenure in current job: unemployed, under_1y, 1_to_4y, 4_to_7y, or over_7y",
      },
      {
        name: "personal_status",
        definition: "marital status: single, married, divorced, or widowed",
      },
      {
        name: "other_parties",
        definition: "third parties on the loan: none, co_applicant, or guarantor",
      },
      {
        name: "property_type",
        definition:
          "most valuable declared asset: real_estate, savings_contract, car_or_other, or unknown",
      },
      { name: "other_plans", definition: "other installment plans: bank, stores, or none" },
      { name: "housing", definition: "housing situation: rent, own, or free" },
      {
        name: "job_type",
        definition: "job skill band: unskilled_nonres, unskilled_res, skilled, or management",
      },
    ],
  },
  adult: {
    title: "Income threshold screening",
    objective:
      "The model scores the probability that a person's annual income exceeds the " +
      "program threshold, from demographic and employment attributes.",
    riskMeaning:
      "A positive call marks the record as above-threshold, which routes it to " +
      "manual eligibility review. A negative call keeps automatic processing.",
    features: [
      { name: "age", definition: "age in years" },
      { name: "workclass", definition: "employer type: private, government, self-employed, or other" },
      { name: "education", definition: "highest completed education level" },
      { name: "marital_status", definition: "current marital status" },
      { name: "occupation", definition: "occupation category" },
      { name: "relationship", definition: "household relationship of the respondent" },
      { name: "race", definition: "self-reported race category" },
      { name: "sex", definition: "self-reported sex" },
      { name: "hours_per_week", definition: "usual hours worked per week" },
      { name: "capital_gain", definition: "reported capital gains for the year" },
    ],
  },
  heloc: {
    title: "Home equity line repayment risk",
    objective:
      "The model scores the probability that a home equity line of credit applicant " +
      "becomes seriously delinquent within two years, from credit bureau attributes.",
    riskMeaning:
      "A positive call recommends declining the line or pricing it for elevated " +
      "risk. A negative call recommends standard approval.",
    features: [
      { name: "external_risk_estimate", definition: "consolidated bureau risk score, higher is safer" },
      { name: "msince_oldest_trade", definition: "months since the oldest credit line opened" },
      { name: "msince_recent_trade", definition: "months since the most recent credit line opened" },
      { name: "average_months_in_file", definition: "average age of credit lines, months" },
      { name: "num_satisfactory_trades", definition: "count of credit lines in good standing" },
      { name: "percent_trades_never_delq", definition: "share of credit lines never delinquent" },
      { name: "msince_recent_delq", definition: "months since the most recent delinquency" },
      { name: "num_inq_last_6m", definition: "credit inquiries in the last six months" },
      { name: "net_fraction_revolving_burden", definition: "revolving balance as a share of credit limit" },
      { name: "num_bank_trades_high_util", definition: "bank credit lines above 75 percent utilization" },
    ],
  },
};

const FALLBACK: TaskSummary = {
  title: "Case review",
  objective:
    "The model scores the probability that this case belongs to the positive " +
    "(elevated risk) class, from the feature values shown in the data explorer.",
  riskMeaning:
    "A positive call routes the case to the elevated-risk handling path; a " +
    "negative call keeps the standard path.",
  features: [],
};

/** Inner HTML of the task summary panel for a dataset. Unknown ids get
 * a generic framing so a custom deployment still renders coherently. */
export function summaryPanelHtml(dataset: string): string {
  const s = TASK_SUMMARIES[dataset] ?? FALLBACK;
  const parts: string[] = [];
  parts.push(`<h3 class="ts-title">${esc(s.title)}</h3>`);
  parts.push(`<h4>Prediction objective</h4><p class="ts-objective">${esc(s.objective)}</p>`);
  parts.push(`<h4>What a risk call means</h4><p class="ts-risk">${esc(s.riskMeaning)}</p>`);
  if (s.features.length > 0) {
    parts.push("<h4>Feature definitions</h4><dl class=\"ts-features\">");
    for (const f of s.features) {
      parts.push(`<dt>${esc(f.name)}</dt><dd>${esc(f.definition)}</dd>`);
    }
    parts.push("</dl>");
  }
  parts.push(
    "<p class=\"ts-note\">Scores run from 0 to 1; the distribution plot places this " +
      "case among scores from held-out data. The data explorer below is read-only.</p>",
  );
  return parts.join("");
}
