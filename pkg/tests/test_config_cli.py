import numpy as np
import pytest

from fifonet import harness
from fifonet.cli import emit_plotdata, run_cli
from fifonet.config import dump_config, example1_run_config, parse_config
from fifonet.errors import ConfigError, GridMismatch
from fifonet.order import ConeOrder
from fifonet.sim import SimConfig, read_csv, simulate

CHAIN2 = """\
network:
  cells: 2
  root: 1
  edges: [[1, 2, 1.0]]
  jam_density: 2.0
fd:
  v: 1.0
  w: 1.0
  F: 0.5
sim:
  dt: 0.001
  horizon: 1.0
  record_every: 100
experiment:
  name: simulate
  x0: [1.0, 0.5]
"""


@pytest.fixture
def chain2_cfg(tmp_path):
    path = tmp_path / "chain2.yaml"
    path.write_text(CHAIN2)
    return path


def test_example1_config_round_trip():
    cfg = example1_run_config()
    back = parse_config(dump_config(cfg))
    assert back.spec.cells == cfg.spec.cells
    assert back.spec.root == cfg.spec.root
    assert [tuple(e) for e in back.spec.edges] == [tuple(e) for e in cfg.spec.edges]
    np.testing.assert_array_equal(back.spec.jam_density, cfg.spec.jam_density)
    for p in ("v", "w", "F"):
        np.testing.assert_array_equal(back.fd_params[p], cfg.fd_params[p])
    assert back.sim == cfg.sim
    assert back.experiment == cfg.experiment
    net, fds = back.build()
    ref = harness.build_example1()
    np.testing.assert_array_equal(net.R, ref.net.R)
    np.testing.assert_array_equal(fds.F, ref.fds.F)


def test_unknown_key_names_key_and_line():
    text = CHAIN2.replace("  record_every: 100", "  record_every: 100\n  tolerance: 1e-6")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == "sim.tolerance"
    assert info.value.line == 14
    assert "sim.tolerance" in str(info.value) and "line 14" in str(info.value)


def test_unknown_top_level_key():
    with pytest.raises(ConfigError) as info:
        parse_config(CHAIN2 + "extra: 1\n")
    assert info.value.key == "extra"


def test_edge_to_unknown_cell():
    with pytest.raises(ConfigError, match="unknown cell 3"):
        parse_config(CHAIN2.replace("[[1, 2, 1.0]]", "[[1, 3, 1.0]]"))


def test_missing_fd_entry_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(CHAIN2.replace("  F: 0.5", "  F: [0.5]"))
    assert run_cli(["simulate", str(path), "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "fd.F" in err and "cell 2" in err


def test_invalid_network_exits_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(CHAIN2.replace("[[1, 2, 1.0]]", "[[1, 2, 1.5]]"))
    assert run_cli(["simulate", str(path), "--out-dir", str(tmp_path)]) == 2


def test_simulate_chain2(chain2_cfg, tmp_path):
    out = tmp_path / "out"
    assert run_cli(["simulate", str(chain2_cfg), "--dt", "1e-4", "--horizon", "0.5", "--out-dir", str(out)]) == 0
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert csvs == ["trajectory.csv"]
    header, data = read_csv(out / "trajectory.csv")
    assert header == ["t", "x_1", "x_2"]
    assert data[-1, 0] == pytest.approx(0.5)
    report = (out / "simulate_report.txt").read_text()
    assert "[summary]" in report and "status=PASS" in report


def test_simulate_matches_library(chain2_cfg, tmp_path):
    run_cli(["simulate", str(chain2_cfg), "--out-dir", str(tmp_path)])
    _, data = read_csv(tmp_path / "trajectory.csv")
    net, fds = parse_config(CHAIN2).build()
    traj = simulate(net, fds, [1.0, 0.5], SimConfig(dt=1e-3, horizon=1.0, record_every=100))
    np.testing.assert_array_equal(data[:, 1:], traj.states)


def test_deterministic_output(chain2_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_cli(["simulate", str(chain2_cfg), "--seed", "4", "--out-dir", str(d)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_env_var_output_dir(chain2_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("FIFO_SIM_OUT", str(tmp_path / "env"))
    assert run_cli(["simulate", str(chain2_cfg)]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()
    assert run_cli(["simulate", str(chain2_cfg), "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "trajectory.csv").exists()


def test_runtime_error_exits_1(chain2_cfg, tmp_path, capsys):
    assert run_cli(["simulate", str(chain2_cfg), "--dt", "1", "--out-dir", str(tmp_path)]) == 1
    assert "StepSizeTooLarge" in capsys.readouterr().err


def test_run_uses_experiment_name(chain2_cfg, tmp_path):
    assert run_cli(["run", str(chain2_cfg), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory.csv").exists()


def test_make_config_parses(capsys):
    assert run_cli(["make-config"]) == 0
    cfg = parse_config(capsys.readouterr().out)
    assert cfg.spec.n == 10 and cfg.experiment["name"] == "example1"


def test_example1_command(tmp_path):
    assert run_cli(["example1", "--out-dir", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {f"traj_k{k}.csv" for k in range(1, 7)} <= names
    assert {"z_cell2.csv", "z_cell6.csv", "z_cell9.csv", "order_report.txt"} <= names
    report = (tmp_path / "order_report.txt").read_text().splitlines()
    pairs = [l for l in report if l.startswith("pair_") and "margin" not in l]
    assert len(pairs) == 15 and all(l.endswith("=pass") for l in pairs)
    assert "status=PASS" in report
    header, data = read_csv(tmp_path / "z_cell2.csv")
    assert header == ["t"] + [f"z_k{k}" for k in range(1, 7)]
    # z-trajectories keep their ordering in the plotted cell
    assert np.all(np.diff(data[:, 1:], axis=1) <= 1e-6 * data[0, 1])


@pytest.mark.parametrize("command", ["km-check", "orthant-witness", "cumulative-check"])
def test_other_experiments(command, tmp_path):
    args = [command, "--out-dir", str(tmp_path)]
    assert run_cli(args) == 0
    report = (tmp_path / f"{command}_report.txt").read_text()
    assert "status=PASS" in report


def test_property_command(tmp_path):
    cfg = example1_run_config()
    cfg.experiment = {"name": "property-test", "n_pairs": 5, "random_trees": 3, "tree_size": 6}
    path = tmp_path / "p.yaml"
    path.write_text(dump_config(cfg))
    assert run_cli(["run", str(path), "--horizon", "0.1", "--out-dir", str(tmp_path)]) == 0
    report = (tmp_path / "property-test_report.txt").read_text()
    assert "pairs=8" in report and "failures=0" in report


def _short_runs(ex1, dt):
    cfg = SimConfig(dt=dt, horizon=0.01, record_every=10)
    return [simulate(ex1.net, ex1.fds, x, cfg) for x in ex1.initial]


def test_emit_plotdata(ex1, tmp_path):
    runs = _short_runs(ex1, 1e-4)
    paths = emit_plotdata(runs, ex1.order, [2, 6, 9], tmp_path)
    assert [p.name for p in paths] == ["z_cell2.csv", "z_cell6.csv", "z_cell9.csv"]
    for p in paths:
        header, data = read_csv(p)
        assert len(header) == 7 and data.shape[1] == 7
    _, data = read_csv(paths[0])
    np.testing.assert_allclose(data[:, 1], runs[0].z_states(ConeOrder.from_network(ex1.net))[:, 1])


def test_emit_plotdata_empty_selection(ex1, tmp_path):
    assert emit_plotdata(_short_runs(ex1, 1e-4), ex1.order, [], tmp_path) == []
    assert not list(tmp_path.iterdir())


def test_emit_plotdata_grid_mismatch(ex1, tmp_path):
    runs = _short_runs(ex1, 1e-4)
    runs[3] = _short_runs(ex1, 5e-5)[3]
    with pytest.raises(GridMismatch):
        emit_plotdata(runs, ex1.order, [2], tmp_path)
