import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import settings

from mvff import experiments as ex
from mvff.config import ExperimentConfig

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

N_POLICY_SEEDS = 5


@pytest.fixture(scope="session")
def bench_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def train_scenes(bench_config):
    return ex.corpus(bench_config)[0]


@pytest.fixture(scope="session")
def policy_sets(bench_config, train_scenes):
    """One trained fast/normal/slow triple per seed 0..4."""
    return [ex.train_policies(replace(bench_config, seed=s), train_scenes)[0]
            for s in range(N_POLICY_SEEDS)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and return the flag."""
    log = request.config.stash[_VERDICTS]

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        log.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
