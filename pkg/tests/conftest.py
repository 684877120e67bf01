import numpy as np
import pytest

from hlftune.bench import ExecutorSpec, make_synthetic
from hlftune.space import ConfigSpace, Constraint, ParameterSpec, default_space, default_templates_dir, load_templates


@pytest.fixture(scope="session")
def fabric_space():
    return default_space()


@pytest.fixture(scope="session")
def fabric_templates():
    return load_templates(default_templates_dir())


@pytest.fixture(scope="session")
def fabric_executor(fabric_space):
    return ExecutorSpec("synthetic", synthetic=make_synthetic(fabric_space, seed=0))


@pytest.fixture
def small_space():
    params = (
        ParameterSpec("batch.timeout", "numeric-float", 0.1, 10.0, scale="log", target_path="orderer.timeout"),
        ParameterSpec("batch.max", "numeric-int", 1, 1000, target_path="orderer.max"),
        ParameterSpec("preferred", "numeric-int", 1, 2048, target_path="orderer.preferred"),
        ParameterSpec("absolute", "numeric-int", 1, 2048, target_path="orderer.absolute"),
        ParameterSpec("db", "categorical", choices=("goleveldb", "CouchDB"), target_path="peer.db"),
        ParameterSpec("gossip", "boolean", target_path="peer.gossip"),
    )
    cons = (Constraint("less-equal", {"lhs": "preferred", "rhs": "absolute"}),)
    return ConfigSpace(params, cons)


@pytest.fixture
def small_templates():
    return {
        "orderer.yaml": "Timeout: {{orderer.timeout}}\nMax: {{ orderer.max }}\nPref: {{orderer.preferred}}\n"
                        "Abs: {{orderer.absolute}}\n",
        "core.yaml": "db: {{peer.db}}\ngossip: {{peer.gossip}}\n",
    }


def random_points(n, d, seed=0):
    return np.random.default_rng(seed).random((n, d))


verdicts_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[verdicts_key] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(verdicts_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[verdicts_key].append(line)
        print(line)
        return passed

    return record
