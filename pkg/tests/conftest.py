import numpy as np
import pytest
from hypothesis import strategies as st

from threatsim.core import AcceptanceSegment, CulturalIdentity, ModelParams


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def grid(params):
    return params.grid()


def random_segment(rng, eps=0.05):
    a = rng.uniform(-1 + eps, 1 - eps)
    b = rng.uniform(-1, a - eps)
    B = rng.uniform(a + eps, 1)
    return (a, b, B)


def random_identity(rng, k=3, eps=0.05):
    return [random_segment(rng, eps) for _ in range(k)]


@st.composite
def segments(draw, eps=0.05):
    a = draw(st.floats(-1 + eps, 1 - eps))
    b = draw(st.floats(-1, a - eps))
    B = draw(st.floats(a + eps, 1))
    return AcceptanceSegment(a, b, B)


@st.composite
def identities(draw, k=3):
    return CulturalIdentity(tuple(draw(segments()) for _ in range(k)))


def rng(seed=0):
    return np.random.default_rng(seed)


# -- acceptance summary: one PASS/FAIL line per criterion -------------------------

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, text = mark.args
    ok, prev_text = _criteria.get(n, (True, text))
    _criteria[n] = (ok and not rep.failed, prev_text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
