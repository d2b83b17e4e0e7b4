import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voltvar.feeder import CaseKind, FeederConfig, build_feeder, sample_scenario  # noqa: E402

# load multipliers that push each small feeder to a few percent voltage deviation
SMALL_FEEDERS = {2: 200.0, 3: 80.0, 10: 20.0}


def small_feeder(n_buses):
    return build_feeder(FeederConfig(n_nodes=n_buses - 1, segment_length_km=1.0,
                                     r_ohm_per_km=5.0, x_ohm_per_km=6.0))


def small_scenario(n_buses, case, seed=3):
    model = small_feeder(n_buses)
    return model, sample_scenario(model, case, 0.5, seed).scaled(SMALL_FEEDERS[n_buses])


@pytest.fixture(scope="session")
def feeder_250():
    return build_feeder()


@pytest.fixture(scope="session")
def mean_under(feeder_250):
    return sample_scenario(feeder_250, CaseKind.UNDER, 0.5, 1, mean_load=True)


@pytest.fixture(scope="session")
def mean_over(feeder_250):
    return sample_scenario(feeder_250, CaseKind.OVER, 0.5, 1, mean_load=True)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
