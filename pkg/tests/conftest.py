import numpy as np
import pytest

from thermoform.shift import build_sft, full_shift, golden_mean


@pytest.fixture
def golden():
    return golden_mean()


@pytest.fixture
def coin():
    return full_shift(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_primitive_sft(rng, k):
    """Rejection-sample a primitive 0/1 matrix with no stranded symbols."""
    while True:
        A = (rng.random((k, k)) < 0.6).astype(int)
        if A.sum(axis=0).all() and A.sum(axis=1).all():
            space = build_sft(k, A)
            if space.is_primitive:
                return space


#: one line per acceptance criterion or sub-criterion, filled by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
