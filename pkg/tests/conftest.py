import numpy as np
import pytest

from bmsim.presets import build_preset
from bmsim.sim import audit, integrate


class PresetRuns:
    """Runs each preset at most once per test session."""

    def __init__(self):
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            sc = build_preset(name)
            traj = integrate(sc)
            self._cache[name] = (sc, traj, audit(traj, sc))
        return self._cache[name]


@pytest.fixture(scope="session")
def preset_runs():
    return PresetRuns()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
