import numpy as np
import pytest

from psml.graph import SynthConfig, generate_pair, split_anchors


@pytest.fixture(scope="session")
def small_pair():
    gs, gt, a = generate_pair(SynthConfig(n=120, m=2, anchor_fraction=0.5, dropout=0.1, seed=11))
    return gs, gt, split_anchors(a, 0.3, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
