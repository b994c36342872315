"""Fixed-step integration of the cell dynamics with trajectory recording.

Both the density system and its cumulative-coordinate twin are integrated by
explicit Euler or classical RK4 on a uniform grid ``t_k = k dt``. After each
step the densities are projected back onto the box ``[0, jam]`` and the size
of the correction is recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dynamics
from .errors import NonFiniteState, StateOutOfBox, StepSizeTooLarge
from .fd import FDSet
from .network import Network
from .order import ConeOrder

METHODS = ("rk4", "euler")
STABILITY_FACTOR = 0.1


class DemandTable:
    """Piecewise-constant external demand ``w_r(t)``.

    Entry ``(t_k, v_k)`` sets the demand to ``v_k`` on ``(t_k, t_{k+1}]``;
    the first value also holds at ``t_0`` itself and the demand is zero
    before ``t_0``. An empty table means no external demand.
    """

    def __init__(self, table: Sequence[tuple[float, float]] = ()):
        table = sorted((float(t), float(v)) for t, v in table)
        self.times = np.array([t for t, _ in table])
        self.values = np.array([v for _, v in table])
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("external demand must be nonnegative and finite")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("demand breakpoints must be distinct")

    def __call__(self, t: float) -> float:
        if self.times.size == 0 or t < self.times[0]:
            return 0.0
        k = max(int(np.searchsorted(self.times, t, side="left")) - 1, 0)
        return float(self.values[k])

    def __bool__(self):
        return bool(self.times.size)

    def as_list(self) -> list[list[float]]:
        return [[float(t), float(v)] for t, v in zip(self.times, self.values)]

    def __eq__(self, other):
        return isinstance(other, DemandTable) and self.as_list() == other.as_list()


@dataclass
class SimConfig:
    dt: float = 1e-4
    horizon: float = 1.0
    method: str = "rk4"
    record_every: int = 10
    demand: DemandTable = field(default_factory=DemandTable)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        self.record_every = int(self.record_every)
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not isinstance(self.demand, DemandTable):
            self.demand = DemandTable(self.demand)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    def sample_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.record_every)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps


@dataclass
class Trajectory:
    """Recorded samples of one run.

    ``states`` are densities when ``coords == "x"`` and cumulative states
    when ``coords == "z"``; flows are always evaluated at the matching
    densities.
    """

    times: np.ndarray
    states: np.ndarray
    phi: np.ndarray
    phi_in: np.ndarray
    demand: np.ndarray
    coords: str = "x"
    max_clamp: float = 0.0
    clamp_bound: float = 0.0

    def z_states(self, order: ConeOrder) -> np.ndarray:
        return self.states if self.coords == "z" else order.to_z(self.states)

    def x_states(self, order: ConeOrder) -> np.ndarray:
        if self.coords == "x":
            return self.states
        return self.states @ (np.eye(order.n) - order.R).T

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _step(field_fn, method, t, y, dt):
    if method == "euler":
        return y + dt * field_fn(t, y)
    k1 = field_fn(t, y)
    k2 = field_fn(t + dt / 2, y + dt / 2 * k1)
    k3 = field_fn(t + dt / 2, y + dt / 2 * k2)
    k4 = field_fn(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(
    field_fn: Callable[[float, np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], tuple[np.ndarray, float]],
    y0: np.ndarray,
    cfg: SimConfig,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Generic fixed-step loop; returns ``(times, samples, max_clamp)``.

    ``y0`` may carry leading batch axes; samples have shape ``(m,) + y0.shape``.
    """
    y = np.array(y0, dtype=float)
    steps = cfg.sample_steps()
    out = np.empty((steps.size,) + y.shape)
    out[0] = y
    slot = 1
    max_clamp = 0.0
    for k in range(cfg.n_steps):
        y = _step(field_fn, cfg.method, k * cfg.dt, y, cfg.dt)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t = {(k + 1) * cfg.dt}")
        y, clamp = project(y)
        max_clamp = max(max_clamp, clamp)
        if slot < steps.size and steps[slot] == k + 1:
            out[slot] = y
            slot += 1
    return steps * cfg.dt, out, max_clamp


def _guard(fds: FDSet, cfg: SimConfig) -> None:
    limit = STABILITY_FACTOR / fds.lipschitz
    if cfg.dt > limit * (1 + 1e-12):
        raise StepSizeTooLarge(f"dt = {cfg.dt} exceeds 0.1 / L = {limit}")


def _check_box(fds: FDSet, x) -> None:
    slack = dynamics.BOX_TOL * fds.jam
    if np.any(x < -slack) or np.any(x > fds.jam + slack):
        raise StateOutOfBox("initial state lies outside the box [0, jam]")


def _box_projector(fds: FDSet):
    def project(x):
        xc = fds.clamp(x)
        return xc, float(np.max(np.abs(xc - x), initial=0.0))

    return project


def _record(net, fds, cfg, times, samples, coords, max_clamp) -> list[Trajectory]:
    x = samples if coords == "x" else dynamics.z_to_x(net, samples)
    w = np.array([cfg.demand(t) for t in times])
    batch = samples.shape[1:-1]
    phi, phi_in = dynamics.flows(net, fds, x, w.reshape(w.shape + (1,) * len(batch)))
    bound = 10.0 * fds.lipschitz * cfg.dt**2 * float(fds.jam.max())
    if not batch:
        return [Trajectory(times, samples, phi, phi_in, w, coords, max_clamp, bound)]
    return [
        Trajectory(times, samples[:, b], phi[:, b], phi_in[:, b], w, coords, max_clamp, bound)
        for b in range(batch[0])
    ]


def simulate_batch(net: Network, fds: FDSet, x0: np.ndarray, cfg: SimConfig) -> list[Trajectory]:
    """Integrate a stack of initial densities ``x0`` of shape ``(B, n)`` in lockstep.

    ``max_clamp`` on each returned trajectory is the batch-wide maximum.
    """
    _guard(fds, cfg)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))

    def field_fn(t, x):
        return dynamics.vector_field(net, fds, x, cfg.demand(t))

    _check_box(fds, x0)
    times, samples, clamp = integrate(field_fn, _box_projector(fds), fds.clamp(x0), cfg)
    return _record(net, fds, cfg, times, samples, "x", clamp)


def simulate(net: Network, fds: FDSet, x0, cfg: SimConfig | None = None) -> Trajectory:
    """Integrate the density dynamics from ``x0``.

    Raises :class:`StepSizeTooLarge` when ``dt > 0.1 / L`` and
    :class:`NonFiniteState` if the state ever becomes non-finite.
    """
    cfg = cfg or SimConfig()
    return simulate_batch(net, fds, np.asarray(x0, dtype=float)[None, :], cfg)[0]


def simulate_transformed_batch(net: Network, fds: FDSet, z0, cfg: SimConfig) -> list[Trajectory]:
    _guard(fds, cfg)
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    P = net.P

    def field_fn(t, z):
        phi, phi_in = dynamics.flows(net, fds, dynamics.z_to_x(net, z), cfg.demand(t))
        out = -phi
        out[..., net.root] += phi_in[..., net.root]
        return out

    def project(z):
        x = dynamics.z_to_x(net, z)
        xc = fds.clamp(x)
        clamp = float(np.max(np.abs(xc - x), initial=0.0))
        if clamp == 0.0:
            return z, 0.0
        return xc @ P.T, clamp

    _check_box(fds, dynamics.z_to_x(net, z0))
    times, samples, clamp = integrate(field_fn, project, z0, cfg)
    return _record(net, fds, cfg, times, samples, "z", clamp)


def simulate_transformed(net: Network, fds: FDSet, z0, cfg: SimConfig | None = None) -> Trajectory:
    """Integrate ``dz/dt = -phi + e_r phi_in_r`` directly in cumulative coordinates."""
    cfg = cfg or SimConfig()
    return simulate_transformed_batch(net, fds, np.asarray(z0, dtype=float)[None, :], cfg)[0]


def write_csv(path, times, states, prefix: str = "x") -> None:
    """Write ``t,<prefix>_1,...,<prefix>_n`` rows at 17 significant digits."""
    states = np.asarray(states, dtype=float)
    header = ",".join(["t"] + [f"{prefix}_{e + 1}" for e in range(states.shape[1])])
    table = np.column_stack([np.asarray(times, dtype=float), states])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
