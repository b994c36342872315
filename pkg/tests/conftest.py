import numpy as np
import pytest

from fifonet import harness
from fifonet.fd import FDSet
from fifonet.network import NetworkSpec, build_network, chain_spec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ex1():
    return harness.build_example1()


@pytest.fixture
def chain2():
    net = build_network(chain_spec(2, jam=2.0))
    fds = FDSet.piecewise_affine(v=1.0, w=1.0, F=0.5, jam=2.0)
    return net, fds


def make_net(edges, n, root=1, jam=1.0):
    return build_network(NetworkSpec(range(1, n + 1), edges, root, [jam] * n))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
