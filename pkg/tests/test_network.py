import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fifonet.errors import (
    ColumnSumExceeded,
    CycleDetected,
    DisconnectedCell,
    MultipleUpstream,
    NetworkError,
    NonPositiveTurningRate,
    NotNilpotent,
)
from fifonet.harness import random_tree
from fifonet.network import (
    NetworkSpec,
    build_network,
    chain_spec,
    cumulative_matrix,
    path_products,
    routing_matrix,
)

from conftest import make_net

EX1_EDGES = [
    (1, 2, 0.9), (1, 3, 0.1), (2, 4, 1 / 3), (2, 5, 1 / 3), (2, 6, 1 / 3),
    (4, 7, 0.5), (4, 8, 0.5), (6, 9, 0.5), (6, 10, 0.5),
]


def test_chain2_structure():
    net = build_network(chain_spec(2))
    assert net.upstream(2) == 1
    assert net.upstream(1) is None
    assert net.downstream(1) == {2}
    assert net.downstream(2) == set()
    assert net.order[0] == net.root == 0


def test_example1_downstream_sets():
    net = make_net(EX1_EDGES, 10)
    assert net.downstream(1) == {2, 3}
    assert net.downstream(2) == {4, 5, 6}
    assert net.downstream(4) == {7, 8}
    assert net.downstream(6) == {9, 10}
    for sink in (3, 5, 7, 8, 9, 10):
        assert net.downstream(sink) == set()
    assert [c + 1 for c in net.diverges()] == [1, 2, 4, 6]


def test_topological_order_starts_at_root_and_respects_parents():
    net = make_net([(3, 1, 1.0), (1, 2, 1.0)], 3, root=3)
    assert net.order[0] == 2
    pos = {c: k for k, c in enumerate(net.order)}
    for e in range(3):
        if net.parent[e] >= 0:
            assert pos[net.parent[e]] < pos[e]


def test_column_sum_exceeded():
    edges = [(1, 2, 1.0), (2, 3, 0.6), (2, 4, 0.6)]
    with pytest.raises(ColumnSumExceeded):
        make_net(edges, 4)


def test_thirds_pass_column_sum_tolerance():
    make_net([(1, 2, 1 / 3), (1, 3, 1 / 3), (1, 4, 1 / 3)], 4)


@pytest.mark.parametrize(
    "edges, n, root, exc",
    [
        ([(1, 2, 1.0), (2, 1, 1.0)], 2, 1, CycleDetected),
        ([(1, 2, 0.5), (3, 2, 0.5), (1, 3, 0.5)], 3, 1, MultipleUpstream),
        ([(1, 2, 1.0)], 3, 1, DisconnectedCell),
        ([(1, 2, 0.0)], 2, 1, NonPositiveTurningRate),
        ([(1, 2, -0.1)], 2, 1, NonPositiveTurningRate),
        ([(1, 5, 1.0)], 2, 1, NetworkError),
        ([(2, 3, 1.0), (3, 2, 1.0), (1, 4, 1.0)], 4, 1, CycleDetected),
        ([(2, 1, 0.5), (2, 3, 0.5)], 3, 1, DisconnectedCell),
        ([(1, 1, 1.0)], 1, 1, CycleDetected),
    ],
)
def test_invalid_networks(edges, n, root, exc):
    with pytest.raises(exc):
        make_net(edges, n, root)


def test_spec_rejects_bad_cells_and_jam():
    with pytest.raises(NetworkError):
        build_network(NetworkSpec([1, 3], [], 1, [1, 1]))
    with pytest.raises(NetworkError):
        build_network(NetworkSpec([1, 2], [(1, 2, 1.0)], 1, [1.0]))
    with pytest.raises(NetworkError):
        build_network(NetworkSpec([1], [], 1, [0.0]))
    with pytest.raises(NetworkError):
        build_network(NetworkSpec([], [], 1, []))


def test_routing_matrix_examples():
    R = routing_matrix(build_network(chain_spec(2)))
    np.testing.assert_array_equal(R, [[0, 0], [1, 0]])

    R = routing_matrix(make_net(EX1_EDGES, 10))
    assert R[1, 0] == 0.9 and R[2, 0] == 0.1 and R[8, 5] == 0.5
    assert np.count_nonzero(R) == 9
    assert np.all(R.sum(axis=0) <= 1 + 1e-12)

    np.testing.assert_array_equal(routing_matrix(build_network(chain_spec(1))), [[0.0]])


def test_cumulative_matrix_examples():
    np.testing.assert_array_equal(cumulative_matrix(routing_matrix(build_network(chain_spec(2)))), [[1, 0], [1, 1]])
    net = make_net(EX1_EDGES, 10)
    P = net.P
    # path 1 -> 2 -> 4 -> 7
    assert P[6, 0] == pytest.approx(0.5 * (1 / 3) * 0.9, rel=1e-15)
    assert P[6, 0] == pytest.approx(0.15, rel=1e-14)
    np.testing.assert_array_equal(np.diag(P), np.ones(10))
    assert P[0, 6] == 0.0


def test_not_nilpotent():
    with pytest.raises(NotNilpotent):
        cumulative_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 50), seed=st.integers(0, 2**32 - 1))
def test_random_tree_linear_algebra(n, seed):
    net, _ = random_tree(n, seed)
    R, P = net.R, net.P
    assert not np.linalg.matrix_power(R, n).any()
    eye = np.eye(n)
    assert np.max(np.abs(P @ (eye - R) - eye)) <= 1e-12
    assert np.max(np.abs((eye - R) @ P - eye)) <= 1e-12
    assert np.all(P >= 0)
    oracle = path_products(net)
    np.testing.assert_allclose(P, oracle, rtol=1e-15, atol=0)
    anc = (oracle > 0) & ~np.eye(n, dtype=bool)
    assert np.all((P[anc] > 0) & (P[anc] <= 1))
