import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from amdiqkd import published as ref
from amdiqkd.config import ExperimentConfig, LinkConfig, NoiseConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=ref.DISTANCES, ids=lambda d: f"{d}km")
def distance(request):
    return request.param


@pytest.fixture
def cfg201():
    return ref.reference_config(201.86)


@pytest.fixture
def cfg508():
    return ref.reference_config(508.16)


@pytest.fixture
def short_link_cfg():
    """Bright, short link with plenty of clicks for quick pipeline tests."""
    return ExperimentConfig.symmetric(20.0, 0.4, 0.1, 0.3, 0.3, T_c=2e-6, N=1e6, noise=NoiseConfig(sigma=0.0, delta_f=0.0))


def brute_force_match(bins, n_tc):
    """Pairing straight from the definition.

    Walk the clicks in time order; an unmatched click looks for the nearest
    later unmatched click and pairs with it when the gap fits the window.
    """
    bins = [int(b) for b in bins]
    matched = [False] * len(bins)
    pairs = []
    for i in range(len(bins)):
        if matched[i]:
            continue
        j = i + 1
        while j < len(bins) and matched[j]:
            j += 1
        if j < len(bins) and bins[j] - bins[i] <= n_tc:
            matched[i] = matched[j] = True
            pairs.append((i, j))
    return pairs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
