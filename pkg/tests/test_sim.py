import numpy as np
import pytest

from fifonet import dynamics as D
from fifonet.errors import NonFiniteState, StateOutOfBox, StepSizeTooLarge
from fifonet.fd import FDSet, PiecewiseAffineFD
from fifonet.network import build_network, chain_spec
from fifonet.order import ConeOrder
from fifonet.sim import DemandTable, SimConfig, read_csv, simulate, simulate_transformed, write_csv


@pytest.fixture
def single():
    net = build_network(chain_spec(1, jam=600.0))
    fds = FDSet.piecewise_affine(100.0, 100 / 3, 15000.0, 600.0)
    return net, fds


def test_free_flow_decay_matches_exponential(single):
    net, fds = single
    x0 = 100.0  # demand 1e4 < F, so dx/dt = -100 x
    traj = simulate(net, fds, [x0], SimConfig(dt=1e-5, horizon=0.05, record_every=100))
    exact = x0 * np.exp(-100 * traj.times)
    np.testing.assert_allclose(traj.states[:, 0], exact, rtol=1e-6)


@pytest.mark.parametrize("method, order_", [("euler", 1), ("rk4", 4)])
def test_step_halving_ratio(single, method, order_):
    net, fds = single
    finals = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        finals.append(simulate(net, fds, [100.0], SimConfig(dt=dt, horizon=0.05, method=method, record_every=1000)).final[0])
    ratio = abs(finals[0] - finals[1]) / abs(finals[1] - finals[2])
    assert 2**order_ / 2 <= ratio <= 2**order_ * 2


def test_empty_stays_empty(ex1):
    traj = simulate(ex1.net, ex1.fds, np.zeros(10), SimConfig(horizon=0.1))
    assert not traj.states.any()
    z = simulate_transformed(ex1.net, ex1.fds, np.zeros(10), SimConfig(horizon=0.1))
    assert not z.states.any()


def test_times_and_sampling():
    cfg = SimConfig(dt=0.1, horizon=1.0, record_every=3)
    np.testing.assert_array_equal(cfg.sample_steps(), [0, 3, 6, 9, 10])
    net = build_network(chain_spec(1))
    fds = FDSet.piecewise_affine(0.5, 0.5, 0.1, 1.0)
    traj = simulate(net, fds, [0.0], SimConfig(dt=0.1, horizon=1.0, record_every=3))
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times[-1] == pytest.approx(1.0)


@pytest.mark.parametrize("k", range(6))
def test_example1_mass_nonincreasing(ex1, k):
    traj = simulate(ex1.net, ex1.fds, ex1.initial[k], SimConfig(horizon=0.3))
    mass = traj.states.sum(axis=1)
    assert np.all(np.diff(mass) <= 1e-9 * max(mass[0], 1.0))


def test_transformed_z_nonincreasing_off_root(ex1):
    z0 = ex1.order.to_z(ex1.initial[0])
    traj = simulate_transformed(ex1.net, ex1.fds, z0, SimConfig(horizon=0.3))
    assert np.all(np.diff(traj.states, axis=0) <= 1e-9)


def test_commutation(ex1):
    x0 = ex1.initial[0]
    z0 = ex1.order.to_z(x0)
    cfg = SimConfig(dt=1e-4, horizon=0.5)
    zx = simulate(ex1.net, ex1.fds, x0, cfg).z_states(ex1.order)
    zz = simulate_transformed(ex1.net, ex1.fds, z0, cfg).states
    assert np.max(np.abs(zx - zz)) <= 1e-6 * np.abs(z0).max()


def test_clamp_vanishes_with_dt(ex1):
    clamps = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        traj = simulate(ex1.net, ex1.fds, ex1.initial[1], SimConfig(dt=dt, horizon=0.2))
        assert traj.max_clamp <= traj.clamp_bound
        clamps.append(traj.max_clamp)
    assert clamps[-1] <= clamps[0]


def test_flow_records_consistent(ex1):
    traj = simulate(ex1.net, ex1.fds, ex1.initial[2], SimConfig(horizon=0.05))
    phi, phi_in = D.flows(ex1.net, ex1.fds, traj.states)
    np.testing.assert_array_equal(traj.phi, phi)
    np.testing.assert_array_equal(traj.phi_in, phi_in)


def test_step_size_guard(single):
    net, fds = single
    with pytest.raises(StepSizeTooLarge):
        simulate(net, fds, [1.0], SimConfig(dt=2e-3, horizon=0.01))
    simulate(net, fds, [1.0], SimConfig(dt=1e-3, horizon=0.01))


class _Broken(PiecewiseAffineFD):
    def demand(self, x):
        return np.where(np.asarray(x) > 1.0, np.nan, super().demand(x))


def test_non_finite_state_raises():
    net = build_network(chain_spec(1, jam=10.0))
    fds = FDSet([_Broken(1.0, 1.0, 2.0, 10.0)])
    with pytest.raises(NonFiniteState):
        simulate(net, fds, [5.0], SimConfig(dt=0.01, horizon=0.1))


def test_initial_state_must_be_in_box(single):
    net, fds = single
    with pytest.raises(StateOutOfBox):
        simulate(net, fds, [700.0], SimConfig(horizon=0.01))


def test_demand_table_lookup():
    w = DemandTable([(0.0, 5.0), (1.0, 7.0)])
    assert w(-0.5) == 0.0
    assert w(0.0) == 5.0
    assert w(0.5) == 5.0
    assert w(1.0) == 5.0  # left continuous
    assert w(1.0 + 1e-12) == 7.0
    assert DemandTable()(3.0) == 0.0
    with pytest.raises(ValueError):
        DemandTable([(0.0, -1.0)])


def test_external_demand_fills_root(single):
    net, fds = single
    cfg = SimConfig(dt=1e-4, horizon=0.01, demand=[(0.0, 5000.0)])
    traj = simulate(net, fds, [0.0], cfg)
    assert traj.phi_in[1:, 0] == pytest.approx(5000.0)
    assert traj.final[0] > 0


def test_config_validation():
    for bad in (dict(dt=0), dict(horizon=-1), dict(record_every=0), dict(method="rk45")):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_csv_round_trip(tmp_path, ex1):
    traj = simulate(ex1.net, ex1.fds, ex1.initial[0], SimConfig(horizon=0.01, record_every=1))
    path = tmp_path / "t.csv"
    write_csv(path, traj.times, traj.states)
    header, data = read_csv(path)
    assert header == ["t"] + [f"x_{e}" for e in range(1, 11)]
    np.testing.assert_array_equal(data[:, 1:], traj.states)
    np.testing.assert_array_equal(data[:, 0], traj.times)
    write_csv(tmp_path / "z.csv", traj.times, traj.z_states(ex1.order), "z")
    assert (tmp_path / "z.csv").read_text().startswith("t,z_1,")
