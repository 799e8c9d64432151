import numpy as np
import pytest

from nai.classifiers import ClassifierStack
from nai.gates import GateStack
from nai.graph import build_graph
from nai.inference import ModelBundle
from nai.nn import DenseParams
from nai.propagation import Combinator
from nai.verify import random_connected_graph


def k3():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)


def path(n):
    return build_graph([(i, i + 1) for i in range(n - 1)], n)


def random_bundle(rng, f=4, c=3, k=3, mode="sgc", hidden=(5,), gates=False, gamma=0.5):
    """Untrained but complete model: every depth has a classifier."""
    stack = ClassifierStack(Combinator(mode), f, c, k)
    for l in range(1, k + 1):
        stack[l] = DenseParams.init((stack.input_dim(l), *hidden, c), rng)
    g = GateStack.init(f, k, rng) if gates else None
    return ModelBundle(stack, gamma, g)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_graph(rng):
    return random_connected_graph(40, 0.08, rng)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
