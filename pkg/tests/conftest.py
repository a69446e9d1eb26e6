"""Shared fixtures, hypothesis strategies and the acceptance summary hook."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import strategies as st

from zerobias.distributions import finite_discrete

# criterion number -> (description, outcome), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@st.composite
def centred_laws(draw, min_atoms=2, max_atoms=5):
    """A finite-discrete mean-zero law with well separated atoms."""
    n = draw(st.integers(min_atoms, max_atoms))
    raw = draw(st.lists(st.integers(-40, 40), min_size=n, max_size=n, unique=True))
    w = np.array(draw(st.lists(st.integers(1, 20), min_size=n, max_size=n)), dtype=float)
    w /= w.sum()
    v = np.array(raw, dtype=float) / 10.0
    v -= math.fsum(w * v)
    if np.ptp(v) < 0.1:
        v = v * (0.1 / max(np.ptp(v), 1e-3))
    return finite_discrete(v, w)


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, text = marker.args
    ACCEPTANCE[number] = (text, "PASS" if call.excinfo is None else "FAIL")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, text): one acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        text, outcome = ACCEPTANCE[number]
        terminalreporter.write_line(f"{outcome}  criterion {number:>2}: {text}")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
