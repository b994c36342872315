"""FIFO diverge flows and the vector fields in density and cumulative coordinates.

All functions are pure and broadcast over leading axes: a state may be a
single vector of shape ``(n,)`` or a batch of shape ``(..., n)``.
"""

from __future__ import annotations

import numpy as np

from .errors import StateOutOfBox
from .fd import FDSet
from .network import Network

BOX_TOL = 1e-9


def _padded(values: np.ndarray) -> np.ndarray:
    pad = np.full(values.shape[:-1] + (1,), np.inf)
    return np.concatenate([values, pad], axis=-1)


def restricted_supplies(net: Network, fds: FDSet, x) -> np.ndarray:
    """Downstream supply divided by turning rate, shape ``(..., n, max_out_degree)``.

    Padding slots hold ``inf``.
    """
    idx, rates = net.child_table
    S = _padded(fds.supply(x))
    return S[..., idx] / rates


def fifo_outflows(net: Network, fds: FDSet, x) -> np.ndarray:
    """Outflow of every cell under the FIFO diverge rule.

    ``phi_e = min(d_e(x_e), min_i s_i(x_i) / beta_{i,e})`` over the downstream
    cells ``i`` of ``e``; cells ending at a sink are limited by demand only.
    """
    x = np.asarray(x, dtype=float)
    return np.minimum(fds.demand(x), restricted_supplies(net, fds, x).min(axis=-1))


def inflows(net: Network, fds: FDSet, phi, x, w_r: float = 0.0) -> np.ndarray:
    """Inflow of every cell given the outflows ``phi`` at state ``x``.

    Non-root cells receive ``beta_{e,e+} phi_{e+}``. The root receives the
    external demand ``w_r`` capped by its supply; the surplus is discarded.
    """
    phi = np.asarray(phi, dtype=float)
    up = np.where(net.parent >= 0, net.parent, 0)
    phi_in = net.beta_in * phi[..., up]
    s_root = fds.supply(np.asarray(x, dtype=float))[..., net.root]
    phi_in[..., net.root] = np.minimum(w_r, s_root)
    return phi_in


def flows(net: Network, fds: FDSet, x, w_r: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``(phi, phi_in)`` at state ``x``."""
    x = fds.clamp(np.asarray(x, dtype=float))
    phi = fifo_outflows(net, fds, x)
    return phi, inflows(net, fds, phi, x, w_r)


def vector_field(net: Network, fds: FDSet, x, w_r: float = 0.0) -> np.ndarray:
    """Density dynamics ``dx/dt = phi_in - phi``."""
    phi, phi_in = flows(net, fds, x, w_r)
    return phi_in - phi


def vector_field_matrix_form(net: Network, fds: FDSet, x, w_r: float = 0.0) -> np.ndarray:
    """The same field written as ``(R - I) phi + e_r phi_in_r``."""
    phi, phi_in = flows(net, fds, x, w_r)
    out = phi @ (net.R - np.eye(net.n)).T
    out[..., net.root] += phi_in[..., net.root]
    return out


def z_to_x(net: Network, z) -> np.ndarray:
    """``x = (I - R) z``, using ``x_e = z_e - beta_{e,e+} z_{e+}``."""
    z = np.asarray(z, dtype=float)
    up = np.where(net.parent >= 0, net.parent, 0)
    return z - net.beta_in * z[..., up]


def transformed_vector_field(net: Network, fds: FDSet, z, w_r: float = 0.0) -> np.ndarray:
    """Cumulative-coordinate dynamics ``dz/dt = -phi + e_r phi_in_r``.

    Raises :class:`StateOutOfBox` when ``(I - R) z`` leaves the state box by
    more than a relative ``1e-9``.
    """
    x = z_to_x(net, z)
    tol = BOX_TOL * fds.jam
    if np.any(x < -tol) or np.any(x > fds.jam + tol):
        raise StateOutOfBox("(I - R) z lies outside the state box")
    phi, phi_in = flows(net, fds, x, w_r)
    out = -phi
    out[..., net.root] += phi_in[..., net.root]
    return out


def mass_rate(net: Network, fds: FDSet, x, w_r: float = 0.0) -> np.ndarray:
    """Net rate of change of total mass from boundary flows.

    External inflow minus the part of each outflow that leaves the modelled
    network, ``(1 - sum_i beta_{i,e}) phi_e``.
    """
    phi, phi_in = flows(net, fds, x, w_r)
    leaving = (1.0 - net.outflow_fraction) * phi
    return phi_in[..., net.root] - leaving.sum(axis=-1)


def lipschitz_bound(net: Network, fds: FDSet) -> float:
    """A Lipschitz constant of the density field in the max-norm."""
    beta_min = net.beta_in[net.parent >= 0].min() if net.n > 1 else 1.0
    return 2.0 * fds.lipschitz * max(1.0, 1.0 / beta_min)


def regime_signature(net: Network, fds: FDSet, x, w_r: float = 0.0) -> np.ndarray:
    """Integer code of the smooth piece containing ``x``.

    For every cell: which side of each diagram breakpoint ``x_e`` lies on and
    which argument attains the outflow minimum, plus the branch of the root
    inflow minimum. Two states with equal signatures lie in one convex piece
    on which the field is smooth (affine for trapezoidal diagrams).
    """
    x = fds.clamp(np.asarray(x, dtype=float))
    bps = _breakpoint_table(fds)
    sides = (x[..., :, None] > bps).astype(np.int64)
    cand = np.concatenate([fds.demand(x)[..., None], restricted_supplies(net, fds, x)], axis=-1)
    arg = np.argmin(cand, axis=-1)
    root_branch = (w_r <= fds.supply(x)[..., net.root]).astype(np.int64)
    return np.concatenate(
        [sides.reshape(x.shape[:-1] + (-1,)), arg, root_branch[..., None]], axis=-1
    )


def near_nonsmooth(net: Network, fds: FDSet, x, delta, rel_tie: float = 1e-9, w_r: float = 0.0):
    """True where ``x`` is within ``delta`` of a diagram breakpoint or where two
    competing arguments of a flow minimum tie within relative ``rel_tie``."""
    x = fds.clamp(np.asarray(x, dtype=float))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), fds.jam.shape)
    bps = _breakpoint_table(fds)
    close = (np.abs(x[..., :, None] - bps) <= delta[:, None]).any(axis=(-1, -2))
    cand = np.concatenate([fds.demand(x)[..., None], restricted_supplies(net, fds, x)], axis=-1)
    part = np.sort(cand, axis=-1)
    if part.shape[-1] >= 2:
        a, b = part[..., 0], part[..., 1]
        with np.errstate(invalid="ignore"):
            tie = np.isfinite(b) & (b - a <= rel_tie * np.maximum(np.abs(b), 1e-300))
        close = close | tie.any(axis=-1)
    s_root = fds.supply(x)[..., net.root]
    close = close | (np.abs(s_root - w_r) <= rel_tie * max(abs(w_r), 1e-300))
    return close


def _breakpoint_table(fds: FDSet) -> np.ndarray:
    rows = [tuple(fd.breakpoints()) for fd in fds.diagrams]
    width = max([len(r) for r in rows] + [1])
    out = np.full((len(rows), width), np.inf)
    for e, r in enumerate(rows):
        out[e, : len(r)] = r
    return out
