"""Deterministic synthetic datasets for demos and tests.

Two shapes: a credit-scoring table with a categorical-heavy schema and a
small all-numeric vitals table. Labels come from a noisy latent risk
score thresholded to hit a fixed prevalence exactly, so classes are
imbalanced but never separable.
"""

from __future__ import annotations

import csv

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, Dataset, FeatureSchema
from .seeding import substream

_CREDIT_LEVELS = {
    "checking_status": ["none", "overdrawn", "low", "healthy"],
    "credit_history": ["no_credits", "all_paid", "existing_paid", "delayed", "critical"],
    "purpose": ["car_new", "car_used", "furniture", "electronics", "appliances",
                "repairs", "education", "retraining", "business", "other"],
    "savings_status": ["unknown", "minimal", "modest", "comfortable", "substantial"],
    "employment_since": ["unemployed", "under_1y", "1_to_4y", "4_to_7y", "over_7y"],
    "personal_status": ["single", "married", "divorced", "widowed"],
    "other_parties": ["none", "co_applicant", "guarantor"],
    "property_type": ["real_estate", "savings_contract", "car_or_other", "unknown"],
    "other_plans": ["bank", "stores", "none"],
    "housing": ["rent", "own", "free"],
    "job_type": ["unskilled_nonres", "unskilled_res", "skilled", "management"],
}

_CHECKING_RISK = {"none": -0.4, "overdrawn": 0.9, "low": 0.4, "healthy": -0.6}
_SAVINGS_RISK = {"unknown": 0.2, "minimal": 0.5, "modest": 0.1,
                 "comfortable": -0.3, "substantial": -0.6}


def _threshold_labels(z: np.ndarray, n_pos: int) -> np.ndarray:
    """Exactly n_pos ones, assigned to the largest latent scores."""
    y = np.zeros(len(z), dtype=np.int64)
    y[np.argsort(-z, kind="stable")[:n_pos]] = 1
    return y


def demo_credit(seed: int = 0, n: int = 1000) -> Dataset:
    """Credit-default table: 9 numeric + 11 categorical features, 30% positives."""
    rng = substream(seed, "demo-credit")
    duration = rng.integers(4, 73, size=n).astype(np.float64)
    amount = np.round(np.exp(rng.normal(7.8, 0.9, size=n))).astype(np.float64)
    age = rng.integers(19, 76, size=n).astype(np.float64)
    installment_pct = rng.integers(1, 5, size=n).astype(np.float64)
    residence_years = rng.integers(1, 5, size=n).astype(np.float64)
    existing_credits = rng.integers(1, 5, size=n).astype(np.float64)
    dependents = rng.integers(1, 3, size=n).astype(np.float64)
    monthly_income = np.round(np.exp(rng.normal(7.6, 0.4, size=n))).astype(np.float64)
    utilization = np.round(np.clip(rng.beta(2.0, 3.0, size=n), 0.0, 1.0), 3)

    cats = {}
    for name, levels in _CREDIT_LEVELS.items():
        w = rng.dirichlet(np.full(len(levels), 2.0))
        cats[name] = np.array(levels, dtype=object)[rng.choice(len(levels), size=n, p=w)]

    z = (0.9 * (duration - duration.mean()) / duration.std()
         + 0.7 * (np.log(amount) - np.log(amount).mean()) / np.log(amount).std()
         - 0.6 * (age - age.mean()) / age.std()
         + 0.8 * (utilization - float(utilization.mean()))
         + 0.25 * (installment_pct - installment_pct.mean())
         + np.array([_CHECKING_RISK[v] for v in cats["checking_status"]])
         + np.array([_SAVINGS_RISK[v] for v in cats["savings_status"]])
         + 0.8 * rng.normal(size=n))
    y = _threshold_labels(z, int(round(0.30 * n)))

    names_numeric = ["duration_months", "credit_amount", "age_years", "installment_pct",
                     "residence_years", "existing_credits", "dependents",
                     "monthly_income", "utilization"]
    numeric_cols = [duration, amount, age, installment_pct, residence_years,
                    existing_credits, dependents, monthly_income, utilization]
    schema = tuple([FeatureSchema(nm, NUMERIC) for nm in names_numeric]
                   + [FeatureSchema(nm, CATEGORICAL) for nm in _CREDIT_LEVELS])
    columns = tuple(numeric_cols + [cats[nm] for nm in _CREDIT_LEVELS])
    return Dataset("demo-credit", schema, columns, y)


def demo_maternal(seed: int = 0, n: int = 1014) -> Dataset:
    """Vitals table: six numeric features, roughly 26.8% positives."""
    rng = substream(seed, "demo-maternal")
    age = rng.integers(15, 61, size=n).astype(np.float64)
    systolic = np.round(rng.normal(118.0, 16.0, size=n)).clip(70, 190)
    diastolic = np.round(systolic * 0.65 + rng.normal(0.0, 7.0, size=n)).clip(45, 120)
    glucose = np.round(rng.lognormal(np.log(7.5), 0.25, size=n), 1).clip(4.0, 20.0)
    temp = np.round(rng.normal(98.4, 1.1, size=n), 1).clip(96.0, 103.0)
    heart_rate = np.round(rng.normal(74.0, 9.0, size=n)).clip(45, 120)

    z = (0.8 * (systolic - systolic.mean()) / systolic.std()
         + 0.5 * (glucose - glucose.mean()) / glucose.std()
         + 0.4 * (age - age.mean()) / age.std()
         + 0.3 * (heart_rate - heart_rate.mean()) / heart_rate.std()
         + 0.3 * (temp - temp.mean()) / temp.std()
         + 0.8 * rng.normal(size=n))
    y = _threshold_labels(z, int(round(0.268 * n)))

    names = ["age", "systolic_bp", "diastolic_bp", "blood_glucose",
             "body_temp", "heart_rate"]
    cols = (age, systolic, diastolic, glucose, temp, heart_rate)
    schema = tuple(FeatureSchema(nm, NUMERIC) for nm in names)
    return Dataset("demo-maternal", schema, cols, y)


def save_csv(ds: Dataset, path, label_column: str = "label"):
    """Write a dataset back out as CSV (inverse of load_csv)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ds.feature_names + [label_column])
        for i in range(ds.n):
            row = []
            for fs, col in zip(ds.schema, ds.columns):
                v = col[i]
                if fs.kind == NUMERIC:
                    f = float(v)
                    row.append(str(int(f)) if f == int(f) else repr(f))
                else:
                    row.append(str(v))
            row.append(str(int(ds.y[i])))
            w.writerow(row)
