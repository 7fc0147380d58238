from __future__ import annotations

import numpy as np
import pytest

from faircompose import TaskMetric


def random_metric(rng: np.random.Generator, n: int, dims: int | None = None, kind: str | None = None) -> TaskMetric:
    """Random valid metric: abs-diff on a line, max-abs in a box, or scaled l1."""
    kind = kind or rng.choice(["line", "box", "l1"])
    dims = dims or int(rng.integers(1, 4))
    x = rng.random((n, dims))
    if kind == "line":
        d = np.abs(x[:, :1] - x[:, :1].T)
    elif kind == "box":
        d = np.max(np.abs(x[:, None, :] - x[None, :, :]), axis=2)
    else:
        d = np.sum(np.abs(x[:, None, :] - x[None, :, :]), axis=2) / dims
    return TaskMetric(d)


def dyadic_metric(rng: np.random.Generator, n: int) -> TaskMetric:
    """Abs-diff metric on multiples of 1/1024; every sum and difference is exact."""
    q = rng.integers(0, 1025, size=n) / 1024
    return TaskMetric.abs_diff(q)


def nontrivial_metric(rng: np.random.Generator, n: int) -> TaskMetric:
    while True:
        m = random_metric(rng, n)
        if not m.is_trivial():
            return m


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
