import hypothesis
import numpy as np
import pytest

from ssrkit.datamodel import split_overlap
from ssrkit.synthetic import planted_scene

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

# pinned planted instance: P=40, Q=4, N=500, N1=300, L=30, 3-sparse simplex codes
PLANTED_SEED = 0
PLANTED_GAMMA = 1e-3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def planted():
    return planted_scene(seed=PLANTED_SEED)


@pytest.fixture(scope="session")
def planted_split(planted):
    return split_overlap(planted.hs, planted.ms, planted.overlap)


# acceptance criteria outcomes, reported once at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
