"""Verification suites for order preservation of FIFO diverge networks.

* the ten-cell example network with its six ordered initial conditions,
* randomized ordered pairs on fixed and random trees,
* finite-difference sign checks of the cumulative-coordinate Jacobian,
* a constructive witness that the density dynamics are not orthant monotone,
* the identity between cumulative states and integrated future outflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.integrate import trapezoid

from . import dynamics
from .errors import (
    AllPointsSkipped,
    NoDivergeInNetwork,
    NotDrained,
    SetupInvariantViolated,
)
from .fd import FDSet
from .network import Network, NetworkSpec, build_network
from .order import ConeOrder
from .sim import SimConfig, Trajectory, simulate_batch

# --------------------------------------------------------------------------
# Example network
# --------------------------------------------------------------------------

EXAMPLE1_RATES = {
    (1, 2): Fraction(9, 10),
    (1, 3): Fraction(1, 10),
    (2, 4): Fraction(1, 3),
    (2, 5): Fraction(1, 3),
    (2, 6): Fraction(1, 3),
    (4, 7): Fraction(1, 2),
    (4, 8): Fraction(1, 2),
    (6, 9): Fraction(1, 2),
    (6, 10): Fraction(1, 2),
}
EXAMPLE1_CONGESTED = {
    1: frozenset(range(1, 11)),
    2: frozenset({1, 2, 3, 4, 10}),
    3: frozenset({1, 6, 7}),
    4: frozenset({2, 7, 9, 10}),
    5: frozenset({4, 5, 6}),
    6: frozenset(),
}
EXAMPLE1_V = Fraction(100)
EXAMPLE1_W = Fraction(100, 3)
EXAMPLE1_ROOT_FLOW = Fraction(50000, 3)
EXAMPLE1_PLOT_CELLS = (2, 6, 9)


def example1_capacities() -> dict[int, Fraction]:
    """Capacities such that every cell saturates at the same steady root inflow."""
    cap = {1: EXAMPLE1_ROOT_FLOW}
    for (up, down), beta in sorted(EXAMPLE1_RATES.items()):
        cap[down] = beta * cap[up]
    return cap


def example1_initial_exact() -> dict[int, dict[int, Fraction]]:
    """Initial densities as exact fractions: ``2 F_e / v_e`` if congested, else 0."""
    cap = example1_capacities()
    return {
        k: {e: (2 * cap[e] / EXAMPLE1_V if e in cells else Fraction(0)) for e in range(1, 11)}
        for k, cells in EXAMPLE1_CONGESTED.items()
    }


def example1_exact_margins() -> dict[tuple[int, int], list[Fraction]]:
    """``P (x^k - x^l)`` in exact rational arithmetic for every pair ``k < l``."""
    parent = {down: (up, beta) for (up, down), beta in EXAMPLE1_RATES.items()}
    P = {}
    for e in range(1, 11):
        P[e, e] = Fraction(1)
        prod, c = Fraction(1), e
        while c in parent:
            up, beta = parent[c]
            prod *= beta
            P[e, up] = prod
            c = up
    x = example1_initial_exact()
    out = {}
    for k, l in combinations(sorted(x), 2):
        diff = {e: x[k][e] - x[l][e] for e in x[k]}
        out[k, l] = [
            sum(P.get((e, i), Fraction(0)) * diff[i] for i in diff) for e in range(1, 11)
        ]
    return out


@dataclass(eq=False)
class Example1Setup:
    spec: NetworkSpec
    net: Network
    fds: FDSet
    order: ConeOrder
    capacities: np.ndarray
    initial: np.ndarray  # (6, 10), row k-1 is x^(k)(0)
    congested: dict[int, frozenset]
    w_r: float = 0.0

    @property
    def z0(self) -> np.ndarray:
        return self.order.to_z(self.initial)


def example1_spec() -> tuple[NetworkSpec, np.ndarray]:
    cap = example1_capacities()
    F = np.array([float(cap[e]) for e in range(1, 11)])
    jam = F / 25.0
    edges = [(up, down, float(beta)) for (up, down), beta in sorted(EXAMPLE1_RATES.items())]
    return NetworkSpec(range(1, 11), edges, 1, jam), F


def build_example1() -> Example1Setup:
    """Construct the ten-cell example and verify its invariants.

    Raises :class:`SetupInvariantViolated` if capacities, initial densities
    or the ordering of the initial conditions are not as required.
    """
    spec, F = example1_spec()
    net = build_network(spec)
    fds = FDSet.piecewise_affine(float(EXAMPLE1_V), float(EXAMPLE1_W), F, net.jam)
    fds.check_against(net.jam)
    order = ConeOrder.from_network(net)

    for e in range(net.n):
        p = net.parent[e]
        if p >= 0 and not np.isclose(F[e], net.beta_in[e] * F[p], rtol=1e-14):
            raise SetupInvariantViolated(f"capacity of cell {e + 1} does not follow its split")
    exact = example1_initial_exact()
    initial = np.array([[float(exact[k][e]) for e in range(1, 11)] for k in sorted(exact)])
    for k, cells in EXAMPLE1_CONGESTED.items():
        for e in range(1, 11):
            want = 2 * F[e - 1] / float(EXAMPLE1_V) if e in cells else 0.0
            if not np.isclose(initial[k - 1, e - 1], want, rtol=1e-14, atol=0):
                raise SetupInvariantViolated(f"x^({k})_{e}(0) = {initial[k - 1, e - 1]} != {want}")
    for (k, l), margin in example1_exact_margins().items():
        if min(margin) < 0:
            raise SetupInvariantViolated(f"x^({k})(0) does not dominate x^({l})(0)")
    return Example1Setup(spec, net, fds, order, F, initial, dict(EXAMPLE1_CONGESTED))


# --------------------------------------------------------------------------
# Order preservation along trajectories
# --------------------------------------------------------------------------


@dataclass
class OrderPreservationReport:
    min_margin: np.ndarray  # per sample, min_e (P (x(t) - y(t)))_e
    tol: float
    passed: bool
    first_violation: tuple[float, int] | None = None  # (time, cell id)

    @property
    def worst(self) -> float:
        return float(self.min_margin.min())


def order_preservation(order: ConeOrder, upper: Trajectory, lower: Trajectory, tol: float) -> OrderPreservationReport:
    """Check ``upper(t)`` dominates ``lower(t)`` in the cone order at every sample."""
    if upper.times.shape != lower.times.shape or not np.array_equal(upper.times, lower.times):
        raise ValueError("trajectories must share a sampling grid")
    margin = upper.z_states(order) - lower.z_states(order)
    per_sample = margin.min(axis=1)
    bad = np.flatnonzero(per_sample < -tol)
    first = None
    if bad.size:
        k = int(bad[0])
        first = (float(upper.times[k]), int(np.argmin(margin[k])) + 1)
    return OrderPreservationReport(per_sample, tol, not bad.size, first)


@dataclass
class Example1Result:
    setup: Example1Setup
    trajectories: list[Trajectory]
    reports: dict[tuple[int, int], OrderPreservationReport]
    z_cells: dict[int, np.ndarray]  # cell -> (samples, 6)
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values()) and all(self.noncrossing().values())

    def noncrossing(self) -> dict[int, bool]:
        """Per plotted cell: ``z^(1) >= z^(2) >= ... >= z^(6)`` at every sample."""
        return {
            cell: bool(np.all(np.diff(z, axis=1) <= self.tol)) for cell, z in self.z_cells.items()
        }


def example1_config() -> SimConfig:
    return SimConfig(dt=1e-4, horizon=1.0, method="rk4", record_every=10)


def run_example1(cfg: SimConfig | None = None, tol: float | None = None, cells=EXAMPLE1_PLOT_CELLS) -> Example1Result:
    """Simulate all six initial conditions and check all fifteen ordered pairs.

    The default tolerance is ``1e-6 * max_e z^(1)_e(0)``.
    """
    setup = build_example1()
    cfg = cfg or example1_config()
    if tol is None:
        tol = 1e-6 * float(setup.z0[0].max())
    trajs = simulate_batch(setup.net, setup.fds, setup.initial, cfg)
    reports = {
        (k + 1, l + 1): order_preservation(setup.order, trajs[k], trajs[l], tol)
        for k, l in combinations(range(len(trajs)), 2)
    }
    z = np.stack([t.z_states(setup.order) for t in trajs], axis=-1)  # (m, n, 6)
    z_cells = {c: z[:, c - 1, :] for c in cells}
    return Example1Result(setup, trajs, reports, z_cells, tol)


# --------------------------------------------------------------------------
# Randomized ordered pairs
# --------------------------------------------------------------------------


def z_scale(net: Network) -> float:
    """Largest cumulative state in the box, ``max_e (P jam)_e``."""
    return float((net.P @ net.jam).max())


def generate_ordered_pair(net: Network, order: ConeOrder, x0, seed=None, u=None):
    """Return ``(x0, y0)`` with ``x0`` dominating ``y0`` and both in the box.

    Draws ``u >= 0`` (unless given) and sets ``y0 = x0 - a (I - R) u`` with
    the largest ``a <= 1`` keeping ``y0`` in the box, so that
    ``P (x0 - y0) = a u >= 0``. An empty ``x0`` only admits ``y0 = x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    if u is None:
        mask = rng.random(net.n) < 0.6
        if not mask.any():
            mask[rng.integers(net.n)] = True
        u = rng.uniform(0.0, 1.0, net.n) * net.jam * mask
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    d = dynamics.z_to_x(net, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(d > 0, x0 / d, np.inf)
        hi = np.where(d < 0, (x0 - net.jam) / d, np.inf)
    a = min(1.0, float(lo.min()), float(hi.min()))
    y0 = np.clip(x0 - a * d, 0.0, net.jam)
    return x0, y0


@dataclass
class PairFailure:
    index: int
    seed: int
    x0: np.ndarray
    y0: np.ndarray
    worst: float
    first_violation: tuple[float, int] | None


@dataclass
class PropertyReport:
    n_pairs: int
    n_passed: int
    worst_margin: float
    tol: float
    failures: list[PairFailure] = field(default_factory=list)
    n_strict: int = 0  # pairs whose generated initial states differ

    @property
    def passed(self) -> bool:
        return self.n_passed == self.n_pairs

    @property
    def pass_rate(self) -> float:
        return self.n_passed / self.n_pairs


def pair_seeds(seed: int, n: int) -> list[int]:
    """Independent per-pair seeds, stable regardless of evaluation order."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def monotonicity_property_test(
    net: Network,
    fds: FDSet,
    order: ConeOrder,
    n_pairs: int,
    cfg: SimConfig,
    seed: int = 0,
    tol: float | None = None,
) -> PropertyReport:
    """Simulate random ordered pairs and check the order at every sample.

    The default tolerance is ``1e-6 * z_scale(net)``.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    if tol is None:
        tol = 1e-6 * z_scale(net)
    seeds = pair_seeds(seed, n_pairs)
    pairs = []
    for s in seeds:
        rng = np.random.default_rng(s)
        x0 = rng.uniform(0.0, 1.0, net.n) * net.jam
        pairs.append(generate_ordered_pair(net, order, x0, seed=rng))
    stack = np.array([p for pair in pairs for p in pair])
    trajs = simulate_batch(net, fds, stack, cfg)
    report = PropertyReport(n_pairs, 0, np.inf, tol)
    for k, s in enumerate(seeds):
        r = order_preservation(order, trajs[2 * k], trajs[2 * k + 1], tol)
        report.worst_margin = min(report.worst_margin, r.worst)
        report.n_strict += int(np.any(pairs[k][0] != pairs[k][1]))
        if r.passed:
            report.n_passed += 1
        else:
            report.failures.append(PairFailure(k, s, pairs[k][0], pairs[k][1], r.worst, r.first_violation))
    return report


def random_tree(n: int, seed=None) -> tuple[Network, FDSet]:
    """Random rooted tree with random splits and random trapezoidal diagrams.

    Cell labels are shuffled so the root is not always cell 1. Splits out of
    a cell sum to a random total in ``[0.5, 1]``.
    """
    rng = np.random.default_rng(seed)
    parent = [-1] + [int(rng.integers(0, k)) for k in range(1, n)]
    label = rng.permutation(n) + 1
    kids: dict[int, list[int]] = {}
    for k in range(1, n):
        kids.setdefault(parent[k], []).append(k)
    edges = []
    for p, cs in kids.items():
        raw = rng.uniform(0.1, 1.0, len(cs))
        rates = raw / raw.sum() * rng.uniform(0.5, 1.0)
        edges += [(int(label[p]), int(label[c]), float(b)) for c, b in zip(cs, rates)]
    v = rng.uniform(20.0, 100.0, n)
    w = rng.uniform(10.0, 50.0, n)
    F = rng.uniform(500.0, 5000.0, n)
    jam = (F / v + F / w) * rng.uniform(1.0, 1.5, n)
    # jam densities listed by cell id
    by_id = np.empty(n)
    v_id, w_id, F_id = np.empty(n), np.empty(n), np.empty(n)
    for k in range(n):
        i = label[k] - 1
        by_id[i], v_id[i], w_id[i], F_id[i] = jam[k], v[k], w[k], F[k]
    net = build_network(NetworkSpec(range(1, n + 1), edges, int(label[0]), by_id))
    return net, FDSet.piecewise_affine(v_id, w_id, F_id, by_id)


# --------------------------------------------------------------------------
# Finite-difference Jacobian sign checks
# --------------------------------------------------------------------------


@dataclass
class KMReport:
    n_checked: int
    n_skipped: int
    min_entry: float
    argmin: tuple[int, int]  # (row cell, column cell), 1-based
    tol: float
    coords: str
    jacobians: np.ndarray = field(repr=False, default=None)
    points: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.min_entry >= -self.tol


def central_difference_jacobian(fun, y, h: float) -> np.ndarray:
    """Central-difference Jacobian of a batched map; ``y`` has shape ``(..., n)``.

    Returns ``J[..., i, j] = d fun_i / d y_j``.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    E = np.eye(n) * h
    plus = fun(y[..., None, :] + E)
    minus = fun(y[..., None, :] - E)
    return np.swapaxes((plus - minus) / (2 * h), -1, -2)


def km_finite_difference_check(
    net: Network,
    fds: FDSet,
    order: ConeOrder,
    n_points: int = 500,
    h: float | None = None,
    seed=0,
    tol: float | None = None,
    transformed: bool = True,
    w_r: float = 0.0,
    points=None,
    max_rounds: int = 20,
) -> KMReport:
    """Estimate off-diagonal Jacobian entries at random smooth interior points.

    With ``transformed`` the map is the cumulative-coordinate field as a
    function of ``z``; otherwise the density field as a function of ``x``.
    Points within ``max(1e-6 jam, 2h)`` of a diagram breakpoint, at a
    near-tie of a flow minimum, or whose perturbations change the smooth
    piece are skipped and redrawn until ``n_points`` points are checked.
    ``points`` replaces the random samples (skipped ones are then dropped).
    """
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    x_scale = float(fds.jam.max())
    if h is None:
        h = 1e-6 * x_scale
    if tol is None:
        tol = 1e-6 * float(fds.capacity.max()) / x_scale
    delta = np.maximum(1e-6 * net.jam, 2 * h)

    if transformed:

        def fun(z):
            phi, phi_in = dynamics.flows(net, fds, dynamics.z_to_x(net, z), w_r)
            out = -phi
            out[..., net.root] += phi_in[..., net.root]
            return out

        def to_x(z):
            return dynamics.z_to_x(net, z)

        def from_x(x):
            return order.to_z(x)
    else:

        def fun(v):
            return dynamics.vector_field(net, fds, v, w_r)

        def to_x(v):
            return v

        def from_x(x):
            return x

    E = np.eye(net.n) * h

    def smooth_mask(x):
        ok = ~dynamics.near_nonsmooth(net, fds, x, delta, w_r=w_r)
        y = from_x(x)
        sig0 = dynamics.regime_signature(net, fds, x, w_r)
        for sgn in (1.0, -1.0):
            xs = to_x(y[:, None, :] + sgn * E)
            inside = np.all((xs >= 0) & (xs <= net.jam), axis=(-1, -2))
            same = np.all(
                dynamics.regime_signature(net, fds, xs, w_r) == sig0[:, None, :], axis=(-1, -2)
            )
            ok &= inside & same
        return ok

    if points is not None:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        smooth = smooth_mask(x)
        n_skipped = int((~smooth).sum())
        x = x[smooth]
    else:
        # redraw until n_points smooth points are collected
        rng = np.random.default_rng(seed)
        margin = 2 * h
        kept, n_skipped = [], 0
        for _ in range(max_rounds):
            cand = margin + rng.uniform(0.0, 1.0, (n_points, net.n)) * (net.jam - 2 * margin)
            ok = smooth_mask(cand)
            kept.append(cand[ok])
            n_skipped += int((~ok).sum())
            if sum(len(k) for k in kept) >= n_points:
                break
        x = np.concatenate(kept)[:n_points]
    y = from_x(x)
    if not len(x):
        raise AllPointsSkipped("every sampled point is near a nonsmooth set")
    J = central_difference_jacobian(fun, y, h)
    off = J.copy()
    idx = np.arange(net.n)
    off[:, idx, idx] = np.inf
    flat = int(np.argmin(off))
    _, i, j = np.unravel_index(flat, off.shape)
    min_entry = float(off.min()) if net.n > 1 else np.inf
    return KMReport(
        len(x),
        n_skipped,
        min_entry,
        (int(i) + 1, int(j) + 1),
        tol,
        "z" if transformed else "x",
        J,
        x,
    )


# --------------------------------------------------------------------------
# Orthant non-monotonicity
# --------------------------------------------------------------------------


@dataclass
class OrthantWitness:
    x: np.ndarray
    y: np.ndarray
    cell: int  # sibling whose rate drops, 1-based
    diverge: int
    blocker: int
    f_x: float
    f_y: float
    margin: float

    def is_valid(self, tol: float = 0.0) -> bool:
        i = self.cell - 1
        return bool(
            np.all(self.x <= self.y)
            and self.x[i] == self.y[i]
            and self.f_x - self.f_y >= self.margin - tol
        )


def orthant_violation_witness(net: Network, fds: FDSet, margin: float | None = None) -> OrthantWitness:
    """States ``x <= y`` with ``x_i = y_i`` but ``f_i(x) > f_i(y)``.

    Puts the first diverge cell at the density of maximal demand and jams
    one of its downstream cells in ``y`` only. The jam blocks the shared
    outflow, so the sibling cell ``i`` loses its inflow. Requires
    ``f_i(x) - f_i(y) >= margin`` (default ``1e-3`` times the largest
    capacity).
    """
    div = net.diverges()
    if not div:
        raise NoDivergeInNetwork("network has no cell with two or more downstream cells")
    if margin is None:
        margin = 1e-3 * float(fds.capacity.max())
    e = div[0]
    sibling, blocker = net.children[e][0], net.children[e][1]
    grid = np.linspace(0.0, net.jam[e], 2049)
    fd_e = fds[e]
    x = np.zeros(net.n)
    if hasattr(fd_e, "critical_density"):
        x[e] = fd_e.critical_density
    else:
        x[e] = grid[int(np.argmax(fd_e.demand(grid)))]
    y = x.copy()
    y[blocker] = net.jam[blocker]
    fx = float(dynamics.vector_field(net, fds, x)[sibling])
    fy = float(dynamics.vector_field(net, fds, y)[sibling])
    wit = OrthantWitness(x, y, sibling + 1, e + 1, blocker + 1, fx, fy, margin)
    if not wit.is_valid():
        raise SetupInvariantViolated(
            f"witness failed: f_{sibling + 1}(x) - f_{sibling + 1}(y) = {fx - fy} < {margin}"
        )
    return wit


def orthant_order_loss(net: Network, fds: FDSet, witness: OrthantWitness, cfg: SimConfig, tol: float = 0.0):
    """First sample time at which ``x(t) <= y(t)`` fails componentwise, or ``None``."""
    tx, ty = simulate_batch(net, fds, np.stack([witness.x, witness.y]), cfg)
    broken = np.any(tx.states > ty.states + tol, axis=1)
    k = np.flatnonzero(broken)
    return float(tx.times[k[0]]) if k.size else None


# --------------------------------------------------------------------------
# Cumulative future outflow
# --------------------------------------------------------------------------


@dataclass
class CumulativeFlowReport:
    z0: np.ndarray
    integrated: np.ndarray
    error: np.ndarray
    tol: float
    residual: float  # max_e x_e(T)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.error <= self.tol))


def cumulative_flow_check(
    net: Network,
    fds: FDSet,
    order: ConeOrder,
    x0,
    cfg: SimConfig | None = None,
    tol: float | None = None,
    eps_empty: float | None = None,
) -> CumulativeFlowReport:
    """Compare ``z(0) = P x0`` with the time integral of each cell's outflow.

    Without external inflow every vehicle eventually leaves, so the
    cumulative state equals the total future outflow of the cell. Integrals
    use the trapezoid rule on the recorded flows. Raises :class:`NotDrained`
    when ``max x(T)`` exceeds ``eps_empty`` (default ``1e-6 max jam``).
    """
    cfg = cfg or SimConfig(dt=1e-4, horizon=2.0, record_every=1)
    if cfg.demand:
        raise ValueError("the cumulative-flow identity needs zero external demand")
    x0 = np.asarray(x0, dtype=float)
    if eps_empty is None:
        eps_empty = 1e-6 * float(net.jam.max())
    traj = simulate_batch(net, fds, x0[None, :], cfg)[0]
    residual = float(traj.final.max())
    if residual > eps_empty:
        raise NotDrained(f"max density {residual} > {eps_empty} at T = {cfg.horizon}")
    z0 = order.to_z(x0)
    if tol is None:
        tol = 1e-3 * float(z0.max())
    integrated = trapezoid(traj.phi, traj.times, axis=0)
    return CumulativeFlowReport(z0, integrated, np.abs(z0 - integrated), tol, residual)
