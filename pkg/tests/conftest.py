import numpy as np
import pytest

from rotsense.spin_algebra import RotationParams, SpinState, as_spin

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, j) -> SpinState:
    j = as_spin(j)
    v = rng.normal(size=j.dim()) + 1j * rng.normal(size=j.dim())
    return SpinState.from_amplitudes(v)


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng, lo=0.0, hi=2 * np.pi) -> RotationParams:
    return RotationParams.from_axis_angle(rng.uniform(lo, hi), random_unit(rng))
