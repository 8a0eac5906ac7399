"""Shared fixtures and the acceptance-criteria reporting hook."""

import numpy as np
import pytest

from bootmon.datasets import DatasetTable
from bootmon.intervals import fit_ensemble
from bootmon.models import EstimatorSpec

# Acceptance tests append (criterion number, line) tuples here; the
# terminal-summary hook prints them after capture ends, so the per-criterion
# verdicts are visible in any pytest run.
ACCEPTANCE_LINES: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def record_criterion(num: int, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append((num, f"criterion {num:2d}: {verdict}  {detail}"))


def make_linear_table(n: int = 120, seed: int = 5, name: str = "lin") -> DatasetTable:
    """y = 2 x0 - x1 + 0.5 x2 + noise, mild correlation between columns."""
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    x1 = 0.4 * x0 + rng.normal(size=n)
    x2 = rng.uniform(-2, 2, size=n)
    y = 2.0 * x0 - x1 + 0.5 * x2 + 0.3 * rng.normal(size=n)
    return DatasetTable(
        name=name,
        feature_names=("x0", "x1", "x2"),
        features=np.column_stack((x0, x1, x2)),
        target=y,
    )


@pytest.fixture()
def linear_table() -> DatasetTable:
    return make_linear_table()


@pytest.fixture(scope="session")
def ols_ensemble():
    """Small retained-replica OLS ensemble shared by interval tests."""
    table = make_linear_table(n=150, seed=11)
    return table, fit_ensemble(
        EstimatorSpec("ols"), table.features, table.target, B=40, seed=3
    )
