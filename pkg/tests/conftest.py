import time
from dataclasses import dataclass

import pytest

from scanirl.envs import EnvSpec
from scanirl.expert import collect_dataset
from scanirl.generator import GeneratorHyper, train_generator
from scanirl.policy import PolicyHyper, policy_train

SPEC = EnvSpec(corridor_length=5)


@dataclass
class TrainedTMaze:
    spec: EnvSpec
    dataset: object
    policy: object
    policy_history: object
    policy_seconds: float
    generator: object = None
    generator_history: object = None
    generator_seconds: float = None


@pytest.fixture(scope="session")
def tmaze_policy():
    ds = collect_dataset(SPEC, 64, seed=1)
    start = time.perf_counter()
    pol, history = policy_train(ds, PolicyHyper())
    return TrainedTMaze(SPEC, ds, pol, history, time.perf_counter() - start)


@pytest.fixture(scope="session")
def tmaze(tmaze_policy):
    """Policy plus generator, trained once per session (a few minutes)."""
    start = time.perf_counter()
    gen, history = train_generator(tmaze_policy.dataset, GeneratorHyper())
    tmaze_policy.generator = gen
    tmaze_policy.generator_history = history
    tmaze_policy.generator_seconds = time.perf_counter() - start
    return tmaze_policy


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def emit(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert passed, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
