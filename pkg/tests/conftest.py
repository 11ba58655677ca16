import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_dataset(rng, n=40, p=5, weighted=True):
    from metric_screen import WeightedDataset

    X = rng.standard_normal((n, p))
    y = rng.integers(0, 2, n)
    y[:2] = (0, 1)
    w = rng.uniform(0.1, 1.0, n) if weighted else None
    return WeightedDataset(X, y, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store ``(name, passed, detail)`` for the end-of-run acceptance summary."""
    def record(number: int, name: str, passed: bool, detail: str):
        _CRITERIA[number] = (name, bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  {number:>2}  {name}: {detail}")
