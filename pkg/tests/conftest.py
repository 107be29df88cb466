import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from rootdist.model import RationalModel, normalize_energy

settings.register_profile(
    "default",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# acceptance criteria report lines, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}
SUITE_BUDGET = 300.0
_START = time.perf_counter()


def pytest_sessionstart(session):
    global _START
    _START = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
    elapsed = time.perf_counter() - _START
    status = "PASS" if elapsed < SUITE_BUDGET else "FAIL"
    terminalreporter.write_line(
        f"criterion 9 runtime: {status} (this session took {elapsed:.0f} s < {SUITE_BUDGET:.0f} s)"
    )


def random_poles(rng, n, conjugate=True, im_range=(0.1, 5.0), re_range=(0.05, 2.0)):
    """Stable, well-separated poles; conjugate pairs plus one real pole when n is odd."""
    half = n // 2 if conjugate else n
    im = rng.uniform(*im_range, half)
    re = -rng.uniform(*re_range, half)
    poles = re + 1j * im
    if conjugate:
        poles = np.concatenate([poles, poles.conj()])
        if n % 2:
            poles = np.append(poles, -rng.uniform(*re_range))
    return poles


def random_model(rng, n, normalize=True, **kw):
    m = RationalModel(random_poles(rng, n, **kw), gain=rng.uniform(0.5, 2.0))
    return normalize_energy(m) if normalize else m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def stable_models(draw, min_order=1, max_order=6):
    """Hypothesis strategy for conjugate-symmetric stable models."""
    n = draw(st.integers(min_order, max_order))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_model(np.random.default_rng(seed), n, normalize=False)
