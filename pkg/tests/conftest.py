import numpy as np
import pytest


def ball_points(rng, n, d, c=1.0, max_frac=0.95):
    """Uniform directions with radii uniform in [0, max_frac / sqrt(c))."""
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = rng.uniform(0, max_frac, size=(n, 1)) / np.sqrt(c)
    return v * r


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def verdicts(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("criterion", 1)[1]):
            terminalreporter.write_line(line)
