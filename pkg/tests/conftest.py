"""Shared fixtures and the acceptance-criteria terminal summary."""

from __future__ import annotations

import pytest

import clusca

# One line per acceptance criterion, registered by tests/test_acceptance.py
# and echoed after the pytest summary so pass/fail status is visible even
# with output capture on.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def tiny_model():
    # 16 tokens keep every matrix small enough for exhaustive comparisons.
    cfg = clusca.ModelConfig(depth=3, grid=(4, 4), dim=16, heads=2, classes=4, weight_seed=1)
    return clusca.init_model(cfg)


@pytest.fixture(scope="session")
def tiny_schedule():
    return clusca.make_schedule(10, 0.999, 0.95)


@pytest.fixture()
def seeds():
    return clusca.Seeds(noise=7, clustering=11, selection=13)
