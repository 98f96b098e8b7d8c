import functools

import numpy as np
import pytest

from ergofbm.fbm import sample_fbm
from ergofbm.rng import RngStream
from ergofbm.sde_sim import ThetaVector, fine_steps_needed, observe, ou_drift

THETA0 = (2.0, 0.5, 0.7)


@functools.lru_cache(maxsize=64)
def ou_observations(seed: int, n: int = 10_000, q: int = 2, fine_step: float = 0.01, k0: int = 10, burn: int = 2000):
    """fOU observations at THETA0 on a coarse Euler grid (fast, for unit tests)."""
    theta = ThetaVector.ou(*THETA0)
    lag = 1
    noise = sample_fbm(theta.hurst, fine_step, fine_steps_needed(n, q, k0, lag, burn), RngStream(seed, 0))
    obs, _ = observe(ou_drift(0.5, 4.0), theta, noise, k0, n, q, fine_step * k0, burn_steps=burn)
    return obs


@pytest.fixture
def theta0():
    return ThetaVector.ou(*THETA0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}")
