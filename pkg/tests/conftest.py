import numpy as np
import pytest

from qpdlm.simulation import SimulationConfig, generate_panel


@pytest.fixture(scope="session")
def sim_panel():
    """Four years of synthetic data with a known PM10 lag pattern."""
    cfg = SimulationConfig(n_days=1461, seed=11, confounding_strength=0.3)
    return generate_panel(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture(scope="session")
def scenario_c_run():
    """Strong-confounding bias experiment, 200 replicates, and its wall time in seconds."""
    import time

    from qpdlm.simulation import bias_experiment, load_scenario

    t0 = time.perf_counter()
    report = bias_experiment(load_scenario("C"), 200)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def scenario_c_report(scenario_c_run):
    return scenario_c_run[0]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
