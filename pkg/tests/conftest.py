import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def direct_convolution(u, h):
    """Brute-force y(n) = sum_i h[i] u[n-i], zero before the stream starts."""
    y = np.zeros(len(u))
    for n in range(len(u)):
        acc = 0.0
        for i in range(len(h)):
            if n - i >= 0:
                acc += h[i] * u[n - i]
        y[n] = acc
    return y


class SimulationCache:
    """Full-length preset runs shared by every test that needs them.

    Each (preset, algorithm) pipeline runs at most once per session, with
    its wall-clock time recorded.
    """

    def __init__(self):
        self._runs = {}
        self._plants = {}

    def plant(self, name):
        from mvanc.acoustics import synth_pathset
        from mvanc.presets import get_preset

        if name not in self._plants:
            p = get_preset(name)
            self._plants[name] = synth_pathset(p.stage.dims, p.plant)
        return self._plants[name]

    def run(self, name, algorithm="mcalms"):
        import time

        from mvanc.pipeline import run_pipeline
        from mvanc.presets import get_preset

        key = (name, algorithm)
        if key not in self._runs:
            t0 = time.perf_counter()
            res = run_pipeline(get_preset(name).config_for(algorithm), self.plant(name))
            self._runs[key] = (res, time.perf_counter() - t0)
        return self._runs[key][0]

    def seconds(self, name, algorithm="mcalms"):
        self.run(name, algorithm)
        return self._runs[(name, algorithm)][1]


@pytest.fixture(scope="session")
def sims():
    return SimulationCache()


# lines recorded by the acceptance suite, echoed after the test summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
