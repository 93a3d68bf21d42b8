"""Shared fixtures: bundled demo datasets with trained models.

Everything heavy is session-scoped and treated as read-only by tests.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from shapval.datagen import demo_credit, demo_maternal
from shapval.dataset import CATEGORICAL, fit_preprocess, stratified_split, transform
from shapval.gbdt import GBDTConfig, train_gbdt
from shapval.models import LogisticConfig, train_logistic

ACCEPTANCE_LINES: list[str] = []


def _bundle(ds):
    splits = stratified_split(ds.y, 0)
    state = fit_preprocess(ds.take(np.asarray(splits.train)))
    X = transform(ds, state)
    model = train_logistic(X[splits.train], ds.y[splits.train], LogisticConfig(),
                           ds.feature_names)
    return SimpleNamespace(
        ds=ds, splits=splits, state=state, X=X,
        cat_mask=np.array([fs.kind == CATEGORICAL for fs in state.schema]),
        train_X=X[np.asarray(splits.train)],
        train_y=ds.y[np.asarray(splits.train)],
        test=np.asarray(splits.test),
        model=model,
    )


@pytest.fixture(scope="session")
def maternal():
    return _bundle(demo_maternal(0))


@pytest.fixture(scope="session")
def credit():
    return _bundle(demo_credit(0))


@pytest.fixture(scope="session")
def maternal_gbdt(maternal):
    val = np.asarray(maternal.splits.val)
    return train_gbdt(maternal.train_X, maternal.train_y,
                      GBDTConfig(n_estimators=60, max_depth=3, seed=0),
                      X_val=maternal.X[val], y_val=maternal.ds.y[val],
                      feature_names=maternal.ds.feature_names)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
