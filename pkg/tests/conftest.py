"""Shared fixtures and the acceptance-line reporter.

Acceptance tests register one line per criterion; the hook below prints
them in the terminal summary so the verdicts are visible regardless of
pytest's output capturing.
"""

import pytest

from driftmon import calibrate_thresholds

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} — {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_table():
    """Quick threshold table for unit tests: K=16, N=64, target ARL0=50."""
    return calibrate_thresholds(
        train_size=64, n_bins=16, lam=0.03, arl0_target=50.0,
        t_max=170, replicates=60_000, seed=7,
    )


@pytest.fixture(scope="session")
def small_table_k8():
    """Companion table with K=8, N=40 for CLI end-to-end runs."""
    return calibrate_thresholds(
        train_size=40, n_bins=8, lam=0.03, arl0_target=50.0,
        t_max=170, replicates=60_000, seed=7,
    )
