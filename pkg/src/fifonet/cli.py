"""Command-line front end.

    fifonet <experiment> [config.yaml] [--dt DT] [--horizon T] [--seed S] [--out-dir DIR]
    fifonet run config.yaml            # experiment taken from experiment.name
    fifonet make-config                # print the built-in example configuration

Without a config the built-in ten-cell example is used. Output goes to
``--out-dir``, else ``$FIFO_SIM_OUT``, else ``./fifonet_out``. Exit status
is 0 when every check passes, 1 on a failed check or runtime error and 2 on
a configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import EXPERIMENTS, RunConfig, dump_config, example1_run_config, load_config
from .errors import ConfigError, FifoNetError, GridMismatch
from .order import ConeOrder
from .sim import SimConfig, Trajectory, simulate, simulate_transformed, write_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def emit_plotdata(trajectories: list[Trajectory], order: ConeOrder, cells, out_dir) -> list[Path]:
    """One ``z_cell<e>.csv`` per selected cell with columns ``t,z_k1,...,z_kK``."""
    cells = list(cells)
    if not cells:
        return []
    times = trajectories[0].times
    for tr in trajectories[1:]:
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise GridMismatch("trajectories do not share a sampling grid")
    z = [tr.z_states(order) for tr in trajectories]
    out_dir = Path(out_dir)
    paths = []
    for e in cells:
        path = out_dir / f"z_cell{e}.csv"
        cols = np.column_stack([times] + [zk[:, e - 1] for zk in z])
        header = ",".join(["t"] + [f"z_k{k + 1}" for k in range(len(z))])
        np.savetxt(path, cols, fmt="%.17g", delimiter=",", header=header, comments="")
        paths.append(path)
    return paths


def write_report(path, experiment: str, lines: list[tuple[str, object]], passed: bool, summary: dict) -> None:
    """``key=value`` lines, then a ``[summary]`` block."""
    out = [f"experiment={experiment}"]
    out += [f"{k}={_fmt(v)}" for k, v in lines]
    out += ["", "[summary]", f"status={'PASS' if passed else 'FAIL'}"]
    out += [f"{k}={_fmt(v)}" for k, v in summary.items()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, np.ndarray):
        return ",".join(_fmt(x) for x in v.tolist())
    return str(v)


def _sim_config(run: RunConfig, args) -> SimConfig:
    sim = run.sim
    return SimConfig(
        dt=args.dt if args.dt is not None else sim.dt,
        horizon=args.horizon if args.horizon is not None else sim.horizon,
        method=sim.method,
        record_every=sim.record_every,
        demand=sim.demand,
    )


def _seed(run, args):
    return args.seed if args.seed is not None else int(run.experiment.get("seed", 0))


def _run_simulate(run, args, out):
    net, fds = run.build()
    order = ConeOrder.from_network(net)
    cfg = _sim_config(run, args)
    x0 = run.experiment.get("x0")
    if x0 is None:
        x0 = np.zeros(net.n)
    coords = run.experiment.get("coords", "x")
    if coords == "z":
        traj = simulate_transformed(net, fds, order.to_z(x0), cfg)
    elif coords == "x":
        traj = simulate(net, fds, x0, cfg)
    else:
        raise ConfigError("expected x or z", "experiment.coords")
    write_csv(out / "trajectory.csv", traj.times, traj.states, coords)
    lines = [("samples", traj.times.size), ("max_clamp", traj.max_clamp), ("final_mass", traj.final.sum())]
    return True, lines, {"files": "trajectory.csv"}


def _run_example1(run, args, out):
    cfg = _sim_config(run, args)
    tol = run.experiment.get("tol")
    res = harness.run_example1(cfg, tol)
    for k, tr in enumerate(res.trajectories, start=1):
        write_csv(out / f"traj_k{k}.csv", tr.times, tr.states, "x")
    emit_plotdata(res.trajectories, res.setup.order, harness.EXAMPLE1_PLOT_CELLS, out)
    lines = []
    for (k, l), r in res.reports.items():
        lines.append((f"pair_{k}_{l}", "pass" if r.passed else "fail"))
        lines.append((f"pair_{k}_{l}_min_margin", r.worst))
    for cell, ok in res.noncrossing().items():
        lines.append((f"noncrossing_cell{cell}", ok))
    n_fail = sum(not r.passed for r in res.reports.values())
    summary = {"pairs": len(res.reports), "failures": n_fail, "tol": res.tol}
    write_report(out / "order_report.txt", "example1", lines, res.passed, summary)
    return res.passed, None, None


def _property_pairs(run, args):
    net, fds = run.build()
    order = ConeOrder.from_network(net)
    cfg = _sim_config(run, args)
    seed = _seed(run, args)
    n_pairs = int(run.experiment.get("n_pairs", 100))
    tol = run.experiment.get("tol")
    reports = [("network", harness.monotonicity_property_test(net, fds, order, n_pairs, cfg, seed, tol))]
    n_trees = int(run.experiment.get("random_trees", 0))
    size = int(run.experiment.get("tree_size", 20))
    for k, s in enumerate(harness.pair_seeds(seed + 1, n_trees)):
        rng = np.random.default_rng(s)
        tnet, tfds = harness.random_tree(int(rng.integers(2, size + 1)), rng)
        torder = ConeOrder.from_network(tnet)
        reports.append((f"tree{k}", harness.monotonicity_property_test(tnet, tfds, torder, 1, cfg, s)))
    return reports


def _run_property(run, args, out):
    reports = _property_pairs(run, args)
    lines = []
    for name, r in reports:
        lines += [(f"{name}_pairs", r.n_pairs), (f"{name}_passed", r.n_passed), (f"{name}_worst_margin", r.worst_margin)]
        for f in r.failures:
            lines.append((f"{name}_failure_{f.index}", f"seed={f.seed} t={f.first_violation}"))
    ok = all(r.passed for _, r in reports)
    total = sum(r.n_pairs for _, r in reports)
    failed = sum(r.n_pairs - r.n_passed for _, r in reports)
    return ok, lines, {"pairs": total, "failures": failed}


def _run_km(run, args, out):
    net, fds = run.build()
    order = ConeOrder.from_network(net)
    e = run.experiment
    r = harness.km_finite_difference_check(
        net, fds, order, int(e.get("n_points", 500)), e.get("h"), _seed(run, args), e.get("tol")
    )
    lines = [("checked", r.n_checked), ("skipped", r.n_skipped), ("min_offdiag", r.min_entry), ("argmin", f"{r.argmin[0]},{r.argmin[1]}"), ("tol", r.tol)]
    return r.passed, lines, {"points": r.n_checked}


def _run_witness(run, args, out):
    net, fds = run.build()
    w = harness.orthant_violation_witness(net, fds, run.experiment.get("margin"))
    cfg = _sim_config(run, args)
    if args.horizon is None:
        cfg.horizon = min(cfg.horizon, 0.2)
    t_loss = harness.orthant_order_loss(net, fds, w, cfg)
    lines = [
        ("x", w.x), ("y", w.y), ("cell", w.cell), ("diverge", w.diverge), ("blocker", w.blocker),
        ("f_x", w.f_x), ("f_y", w.f_y), ("margin", w.margin), ("order_lost_at", t_loss),
    ]
    ok = w.is_valid() and t_loss is not None
    return ok, lines, {"valid_witness": w.is_valid()}


def _run_cumulative(run, args, out):
    net, fds = run.build()
    order = ConeOrder.from_network(net)
    cfg = _sim_config(run, args)
    x0 = run.experiment.get("x0")
    if x0 is None:
        x0 = harness.build_example1().initial[2] if net.n == 10 else net.jam / 2
    e = run.experiment
    r = harness.cumulative_flow_check(net, fds, order, x0, cfg, e.get("tol"), e.get("eps_empty"))
    lines = [("z0", r.z0), ("integrated", r.integrated), ("max_error", r.error.max()), ("tol", r.tol), ("residual", r.residual)]
    return r.passed, lines, {"cells": net.n}


RUNNERS = {
    "simulate": _run_simulate,
    "example1": _run_example1,
    "property-test": _run_property,
    "km-check": _run_km,
    "orthant-witness": _run_witness,
    "cumulative-check": _run_cumulative,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fifonet", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=list(EXPERIMENTS) + ["run", "make-config"])
    parser.add_argument("config", nargs="?", help="YAML configuration (default: built-in example)")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir")
    return parser


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args.config) if args.config else example1_run_config()
        if args.command == "make-config":
            sys.stdout.write(dump_config(run))
            return EXIT_OK
        command = args.command
        if command == "run":
            command = run.experiment.get("name")
            if command is None:
                raise ConfigError("run needs experiment.name", "experiment.name")
        if command != "example1":
            run.build()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out_dir or os.environ.get("FIFO_SIM_OUT") or "fifonet_out")
    out.mkdir(parents=True, exist_ok=True)
    try:
        ok, lines, summary = RUNNERS[command](run, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FifoNetError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if lines is not None:
        write_report(out / f"{command}_report.txt", command, lines, ok, summary)
    print(f"{command}: {'PASS' if ok else 'FAIL'} (output in {out})")
    return EXIT_OK if ok else EXIT_FAIL


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
