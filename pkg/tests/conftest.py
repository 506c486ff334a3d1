"""Shared fixtures and the acceptance summary printer."""

import pytest

from retplan.families import get_family
from retplan.hypothesis import RetentionHypothesis
from retplan.ret_test import GroupData

# criterion number -> (description, passed); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def depression():
    """Remission counts of the binary worked example, ordered (T, R, P)."""
    return GroupData.from_counts([86, 84, 88], [43, 31, 26])


@pytest.fixture
def epilepsy():
    """Seizure totals of the Poisson worked example, ordered (T, R, P)."""
    return GroupData.from_counts([18, 18, 18], [288, 295, 338])


@pytest.fixture
def binary_hyp():
    return lambda delta: RetentionHypothesis(get_family("binary", "identity"), delta)


@pytest.fixture
def poisson_hyp():
    return lambda delta: RetentionHypothesis(get_family("poisson", "negative"), delta)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        desc, ok = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {desc}")
