import time

import numpy as np
import pytest

from emoblog.simulation import SimConfig, run

SEEDS = tuple(range(1, 11))
_acceptance_lines: list[str] = []


class Runs(dict):
    elapsed = 0.0


@pytest.fixture(scope="session")
def constant_runs():
    """Ten 4032-step runs at constant driving p=6, shared across tests.

    ``elapsed`` holds the wall time of building all ten.
    """
    start = time.perf_counter()
    runs = Runs((seed, run(SimConfig(driving="constant:6", steps=4032, seed=seed))) for seed in SEEDS)
    runs.elapsed = time.perf_counter() - start
    return runs


@pytest.fixture(scope="session")
def small_run():
    return run(SimConfig(driving="constant:6", steps=600, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _acceptance_lines.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
