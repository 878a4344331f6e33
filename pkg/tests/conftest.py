"""Shared fixtures plus the acceptance-criteria summary.

Every test in test_acceptance.py is reported with an explicit PASS/FAIL
line at the end of the run so the criteria can be audited at a glance.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from synth import make_corpus  # noqa: E402

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_acceptance):
        name = nodeid.split("::")[-1]
        outcome = _acceptance[nodeid]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line("%s  %s" % (verdict, name))


@pytest.fixture(scope="session")
def corpus200(tmp_path_factory):
    """200-segment corpus, 8 participants, 6 train / 2 test."""
    root = tmp_path_factory.mktemp("corpus200")
    manifest = make_corpus(str(root), n_segments=200, n_participants=8, n_test_participants=2, seed=0)
    return manifest


@pytest.fixture(scope="session")
def corpus20(tmp_path_factory):
    """Small 20-segment corpus for fast pipeline tests."""
    root = tmp_path_factory.mktemp("corpus20")
    manifest = make_corpus(str(root), n_segments=20, n_participants=4, n_test_participants=1, seed=7)
    return manifest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
