from importlib import resources

import numpy as np
import pytest

from frontier_dqn import agent
from frontier_dqn.gridworld import load_map

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="session")
def house():
    text = resources.files("frontier_dqn.data").joinpath("house.map").read_text("utf-8")
    return load_map(text)


@pytest.fixture(scope="session")
def house_dataset():
    text = resources.files("frontier_dqn.data").joinpath("house_dataset.txt").read_text("utf-8")
    return agent.loads_dataset(text)


@pytest.fixture(scope="session")
def house_states(house_dataset):
    return np.array([t.state for ep in house_dataset for t in ep])


@pytest.fixture(scope="session")
def trained(house_dataset):
    """All four variants trained with default settings on the bundled dataset."""
    import time

    out = {}
    for name in agent.VARIANTS:
        t0 = time.perf_counter()
        params, series = agent.train(house_dataset, agent.TrainConfig(), name)
        out[name] = (params, series, time.perf_counter() - t0)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
