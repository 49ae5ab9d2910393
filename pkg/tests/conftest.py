import time

import pytest
from hypothesis import HealthCheck, settings

from smot import game24
from smot.extraction import build_state_machine

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def problems():
    return game24.load_problem_set()


@pytest.fixture(scope="session")
def full_machine_timed(problems):
    """Machine from exhaustive trees over training problems 1-900 (~1 min),
    with its build time in seconds."""
    t0 = time.perf_counter()
    sm = build_state_machine(
        game24.exhaustive_tree(p) for p in problems[: len(game24.TRAIN_RANGE)]
    )
    return sm, time.perf_counter() - t0


@pytest.fixture(scope="session")
def full_machine(full_machine_timed):
    return full_machine_timed[0]


ACCEPTANCE = []


@pytest.fixture()
def verdict(capsys):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fig1_machine():
    """Machine from exhaustive trees of 2 4 6 12 and 2 2 6 6."""
    return build_state_machine(
        [game24.exhaustive_tree("2 4 6 12"), game24.exhaustive_tree("2 2 6 6")]
    )
