"""YAML experiment configuration: strict parsing and the built-in example.

Top-level keys::

    network:     cells (count or list 1..n), root, edges [[up, down, beta], ...],
                 jam_density (scalar or per-cell list)
    fd:          family (piecewise_affine), v, w, F (scalar or per-cell list),
                 overrides {cell: {v, w, F}}
    sim:         dt, horizon, method (rk4 | euler), record_every
    demand:      [[t, w_r], ...] piecewise-constant external demand
    experiment:  name plus experiment parameters (see EXPERIMENT_KEYS)

Unknown keys are rejected; errors carry the offending key and line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, FifoNetError
from .fd import FDSet
from .network import NetworkSpec, build_network
from .sim import DemandTable, SimConfig

EXPERIMENTS = (
    "simulate",
    "example1",
    "property-test",
    "km-check",
    "orthant-witness",
    "cumulative-check",
)
TOP_KEYS = {"network", "fd", "sim", "demand", "experiment"}
NETWORK_KEYS = {"cells", "root", "edges", "jam_density"}
FD_KEYS = {"family", "v", "w", "F", "overrides"}
FD_PARAMS = ("v", "w", "F")
SIM_KEYS = {"dt", "horizon", "method", "record_every"}
EXPERIMENT_KEYS = {
    "name",
    "x0",
    "coords",
    "n_pairs",
    "seed",
    "tol",
    "n_points",
    "h",
    "random_trees",
    "tree_size",
    "eps_empty",
    "margin",
}


class _LineDict(dict):
    """Mapping that remembers the source line of every key."""

    lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError("duplicate key", key, key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(mapping, key):
    return getattr(mapping, "lines", {}).get(key)


def _section(doc, key, allowed, path=None):
    path = path or key
    sec = doc.get(key, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError("expected a mapping", path, _line(doc, key))
    for k in sec:
        if k not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", f"{path}.{k}", _line(sec, k))
    return sec


def _number(sec, key, path, kind=float):
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path, _line(sec, key))
    if kind is int and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path, _line(sec, key))
    return kind(value)


def _per_cell(sec, key, path, n):
    """Scalar or list of length ``n``; names the first missing cell."""
    value = sec[key]
    line = _line(sec, key)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(n, float(value))
    if not isinstance(value, list):
        raise ConfigError("expected a number or a per-cell list", path, line)
    if len(value) < n:
        raise ConfigError(
            f"{len(value)} entries for {n} cells; missing entry for cell {len(value) + 1}", path, line
        )
    if len(value) > n:
        raise ConfigError(f"{len(value)} entries for {n} cells", path, line)
    try:
        return np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise ConfigError("entries must be numbers", path, line) from None


@dataclass(eq=False)
class RunConfig:
    spec: NetworkSpec
    fd_params: dict[str, np.ndarray]
    sim: SimConfig
    experiment: dict[str, Any] = field(default_factory=dict)

    def build(self):
        """Validated ``(network, fds)``; raises :class:`ConfigError` on mismatch."""
        try:
            net = build_network(self.spec)
            fds = FDSet.piecewise_affine(
                self.fd_params["v"], self.fd_params["w"], self.fd_params["F"], net.jam
            )
            fds.check_against(net.jam)
        except (FifoNetError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return net, fds


def parse_config(text: str) -> RunConfig:
    """Parse a YAML document into a :class:`RunConfig`."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except ConfigError:
        raise
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", line=mark.line + 1 if mark else None) from None
    if doc is None:
        doc = _LineDict()
        doc.lines = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", line=1)
    for k in doc:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(TOP_KEYS))})", k, _line(doc, k))

    net = _section(doc, "network", NETWORK_KEYS)
    for k in ("cells", "root", "jam_density"):
        if k not in net:
            raise ConfigError("missing required key", f"network.{k}", _line(doc, "network"))
    cells = net["cells"]
    if isinstance(cells, int) and not isinstance(cells, bool):
        n = cells
        cell_ids = list(range(1, n + 1))
    elif isinstance(cells, list) and all(isinstance(c, int) for c in cells):
        cell_ids = cells
        n = len(cells)
    else:
        raise ConfigError("expected a cell count or a list of cell ids", "network.cells", _line(net, "cells"))
    if n < 1:
        raise ConfigError("need at least one cell", "network.cells", _line(net, "cells"))
    edges = []
    for k, edge in enumerate(net.get("edges") or []):
        if isinstance(edge, dict):
            extra = set(edge) - {"from", "to", "beta"}
            if extra or len(edge) != 3:
                raise ConfigError("edge mappings need exactly from, to, beta", f"network.edges[{k}]", _line(net, "edges"))
            edge = [edge["from"], edge["to"], edge["beta"]]
        if not (isinstance(edge, list) and len(edge) == 3):
            raise ConfigError("edge must be [upstream, downstream, beta]", f"network.edges[{k}]", _line(net, "edges"))
        edges.append((edge[0], edge[1], edge[2]))
    for i, e, _ in edges:
        for c in (i, e):
            if c not in cell_ids:
                raise ConfigError(f"edge references unknown cell {c}", "network.edges", _line(net, "edges"))
    jam = _per_cell(net, "jam_density", "network.jam_density", n)
    spec = NetworkSpec(cell_ids, edges, _number(net, "root", "network.root", int), jam)

    fd = _section(doc, "fd", FD_KEYS)
    family = fd.get("family", "piecewise_affine")
    if family != "piecewise_affine":
        raise ConfigError(f"unsupported family {family!r}", "fd.family", _line(fd, "family"))
    params = {}
    for p in FD_PARAMS:
        if p not in fd:
            raise ConfigError("missing required key", f"fd.{p}", _line(doc, "fd"))
        params[p] = _per_cell(fd, p, f"fd.{p}", n)
    overrides = fd.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("expected a mapping of cell -> parameters", "fd.overrides", _line(fd, "overrides"))
    for cell, vals in overrides.items():
        path = f"fd.overrides.{cell}"
        if cell not in cell_ids:
            raise ConfigError(f"unknown cell {cell}", path, _line(overrides, cell))
        if not isinstance(vals, dict):
            raise ConfigError("expected a mapping", path, _line(overrides, cell))
        for p in vals:
            if p not in FD_PARAMS:
                raise ConfigError("unknown key (allowed: F, v, w)", f"{path}.{p}", _line(vals, p))
            params[p][cell_ids.index(cell)] = _number(vals, p, f"{path}.{p}")

    sec = _section(doc, "sim", SIM_KEYS)
    kw = {}
    for k in ("dt", "horizon"):
        if k in sec:
            kw[k] = _number(sec, k, f"sim.{k}")
    if "record_every" in sec:
        kw["record_every"] = _number(sec, "record_every", "sim.record_every", int)
    if "method" in sec:
        kw["method"] = str(sec["method"])

    table = doc.get("demand") or []
    if not isinstance(table, list) or not all(isinstance(r, list) and len(r) == 2 for r in table):
        raise ConfigError("expected a list of [t, value] pairs", "demand", _line(doc, "demand"))
    try:
        sim = SimConfig(demand=DemandTable(table), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "sim", _line(doc, "sim")) from None

    exp = _section(doc, "experiment", EXPERIMENT_KEYS)
    if "name" in exp and exp["name"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp['name']!r}", "experiment.name", _line(exp, "name"))
    if "x0" in exp:
        exp = dict(exp)
        exp["x0"] = _per_cell(doc["experiment"], "x0", "experiment.x0", n)
    return RunConfig(spec, params, sim, dict(exp))


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def config_to_dict(cfg: RunConfig) -> dict:
    spec = cfg.spec
    exp = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in cfg.experiment.items()}
    return {
        "network": {
            "cells": spec.n,
            "root": spec.root,
            "edges": [[i, e, b] for i, e, b in spec.edges],
            "jam_density": list(spec.jam_density),
        },
        "fd": {"family": "piecewise_affine", **{p: cfg.fd_params[p].tolist() for p in FD_PARAMS}},
        "sim": {
            "dt": cfg.sim.dt,
            "horizon": cfg.sim.horizon,
            "method": cfg.sim.method,
            "record_every": cfg.sim.record_every,
        },
        "demand": cfg.sim.demand.as_list(),
        "experiment": exp,
    }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def example1_run_config() -> RunConfig:
    """The ten-cell example as a configuration, generated from the harness setup."""
    from .harness import EXAMPLE1_V, EXAMPLE1_W, build_example1, example1_config

    setup = build_example1()
    n = setup.net.n
    params = {
        "v": np.full(n, float(EXAMPLE1_V)),
        "w": np.full(n, float(EXAMPLE1_W)),
        "F": setup.capacities.copy(),
    }
    return RunConfig(setup.spec, params, example1_config(), {"name": "example1"})
