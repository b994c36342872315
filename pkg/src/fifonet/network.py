"""Rooted directed trees of cells and their routing matrices.

Cells are identified by dense integers ``1..n``. Internally every array is
indexed by position ``cell - 1``; all public arrays follow that convention.

A turning rate ``beta`` on the edge ``i -> e`` is the fraction of the outflow
of cell ``i`` that is routed into cell ``e``. The routing matrix stores it as
``R[e, i] = beta``, so column ``i`` of ``R`` holds the split of cell ``i``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ColumnSumExceeded,
    CycleDetected,
    DisconnectedCell,
    MultipleUpstream,
    NetworkError,
    NonPositiveTurningRate,
    NotNilpotent,
)

COLUMN_SUM_TOL = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """Raw description of a cell network.

    Attributes:
        cells: cell identifiers, must be exactly ``1..n``.
        edges: ``(upstream, downstream, beta)`` triples.
        root: the cell fed by the external source.
        jam_density: jam density of every cell, in cell order.
    """

    cells: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]
    root: int
    jam_density: tuple[float, ...]

    def __init__(self, cells, edges, root, jam_density):
        object.__setattr__(self, "cells", tuple(int(c) for c in cells))
        object.__setattr__(
            self, "edges", tuple((int(i), int(e), float(b)) for i, e, b in edges)
        )
        object.__setattr__(self, "root", int(root))
        object.__setattr__(self, "jam_density", tuple(float(x) for x in jam_density))

    @property
    def n(self) -> int:
        return len(self.cells)


@dataclass(frozen=True, eq=False)
class Network:
    """A validated rooted tree of cells.

    Use :func:`build_network` to construct one. ``parent[e]`` is the position
    of the unique upstream cell of ``e`` (``-1`` for the root) and
    ``beta_in[e]`` the turning rate on that edge (``0`` for the root).
    """

    spec: NetworkSpec
    root: int
    parent: np.ndarray
    beta_in: np.ndarray
    children: tuple[tuple[int, ...], ...]
    order: tuple[int, ...]
    jam: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    def upstream(self, cell: int) -> int | None:
        """Upstream cell id of ``cell`` (1-based), ``None`` for the root."""
        p = self.parent[cell - 1]
        return None if p < 0 else int(p) + 1

    def downstream(self, cell: int) -> set[int]:
        """Downstream cell ids ``D(cell)``; empty when the cell ends at a sink."""
        return {c + 1 for c in self.children[cell - 1]}

    def beta(self, downstream: int, upstream: int) -> float:
        if self.parent[downstream - 1] != upstream - 1:
            return 0.0
        return float(self.beta_in[downstream - 1])

    def diverges(self) -> list[int]:
        """Positions of cells with two or more downstream cells, in topological order."""
        return [e for e in self.order if len(self.children[e]) >= 2]

    @cached_property
    def R(self) -> np.ndarray:
        return routing_matrix(self)

    @cached_property
    def P(self) -> np.ndarray:
        return cumulative_matrix(self.R)

    @cached_property
    def child_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(n, max_out_degree)`` child indices and turning rates.

        Padding entries point at index ``n`` with rate ``1``; callers append
        an ``inf`` column so padded slots never win a minimum.
        """
        width = max([len(c) for c in self.children] + [1])
        idx = np.full((self.n, width), self.n, dtype=np.intp)
        rates = np.ones((self.n, width))
        for e, kids in enumerate(self.children):
            for k, i in enumerate(kids):
                idx[e, k] = i
                rates[e, k] = self.beta_in[i]
        return idx, rates

    @cached_property
    def outflow_fraction(self) -> np.ndarray:
        """Column sums of ``R``: the share of each outflow that stays in the network."""
        return self.R.sum(axis=0)


def build_network(spec: NetworkSpec) -> Network:
    """Validate ``spec`` and return a :class:`Network`.

    Raises one of the :class:`~fifonet.errors.NetworkError` subclasses when
    the cells do not form a rooted tree with admissible turning rates.
    """
    n = spec.n
    if n < 1:
        raise NetworkError("network must contain at least one cell")
    if sorted(spec.cells) != list(range(1, n + 1)):
        raise NetworkError(f"cells must be exactly 1..{n}, got {list(spec.cells)}")
    if len(spec.jam_density) != n:
        raise NetworkError(
            f"expected {n} jam densities, got {len(spec.jam_density)}"
        )
    jam = np.asarray(spec.jam_density, dtype=float)
    if not np.all(jam > 0) or not np.all(np.isfinite(jam)):
        raise NetworkError("jam densities must be positive and finite")
    if not 1 <= spec.root <= n:
        raise NetworkError(f"root cell {spec.root} is not a cell")

    parent = np.full(n, -1, dtype=np.intp)
    beta_in = np.zeros(n)
    children: list[list[int]] = [[] for _ in range(n)]
    split = np.zeros(n)
    for up, down, beta in spec.edges:
        if not (1 <= up <= n and 1 <= down <= n):
            raise NetworkError(f"edge ({up} -> {down}) references an unknown cell")
        if not beta > 0:
            raise NonPositiveTurningRate(
                f"turning rate on {up} -> {down} must be positive, got {beta}"
            )
        i, e = up - 1, down - 1
        if parent[e] >= 0:
            raise MultipleUpstream(
                f"cell {down} has two upstream cells ({parent[e] + 1} and {up})"
            )
        parent[e] = i
        beta_in[e] = beta
        children[i].append(e)
        split[i] += beta
    for i in range(n):
        if split[i] > 1 + COLUMN_SUM_TOL:
            raise ColumnSumExceeded(
                f"turning rates out of cell {i + 1} sum to {split[i]:.15g} > 1"
            )

    root = spec.root - 1
    seen = np.zeros(n, dtype=bool)
    order: list[int] = []
    queue = deque([root])
    seen[root] = True
    while queue:
        e = queue.popleft()
        order.append(e)
        for i in children[e]:
            if seen[i]:
                raise CycleDetected(f"cell {i + 1} is reachable twice from the root")
            seen[i] = True
            queue.append(i)
    if not seen.all():
        stray = int(np.flatnonzero(~seen)[0])
        # follow upstream links: a revisit means the stray cells close a loop
        visited = set()
        c = stray
        while c >= 0 and c not in visited:
            visited.add(c)
            c = int(parent[c])
        if c >= 0:
            raise CycleDetected(f"cell {c + 1} lies on a cycle")
        raise DisconnectedCell(f"cell {stray + 1} is not reachable from root {spec.root}")

    return Network(
        spec=spec,
        root=root,
        parent=parent,
        beta_in=beta_in,
        children=tuple(tuple(c) for c in children),
        order=tuple(order),
        jam=jam,
    )


def routing_matrix(net: Network) -> np.ndarray:
    """Routing matrix with ``R[e, i] = beta_{e,i}`` and zeros elsewhere."""
    R = np.zeros((net.n, net.n))
    for e in range(net.n):
        if net.parent[e] >= 0:
            R[e, net.parent[e]] = net.beta_in[e]
    return R


def cumulative_matrix(R: np.ndarray) -> np.ndarray:
    """``(I - R)^-1`` by the terminating Neumann series ``sum_k R^k``.

    A tree routing matrix is nilpotent, so the series ends after at most ``n``
    terms. Raises :class:`NotNilpotent` otherwise.
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    P = np.eye(n)
    term = np.eye(n)
    for _ in range(n):
        term = term @ R
        if not term.any():
            return P
        P += term
    raise NotNilpotent(f"R^{n} is nonzero; the routing graph contains a cycle")


def path_products(net: Network) -> np.ndarray:
    """Path-product matrix built by walking each cell up to the root.

    Entry ``[e, i]`` is the product of turning rates along the path from
    ``i`` down to ``e`` when ``i`` is an ancestor of ``e`` (1 on the
    diagonal, 0 otherwise). Independent of any matrix algebra.
    """
    out = np.zeros((net.n, net.n))
    for e in range(net.n):
        prod = 1.0
        c = e
        out[e, c] = 1.0
        while net.parent[c] >= 0:
            prod *= net.beta_in[c]
            c = int(net.parent[c])
            out[e, c] = prod
    return out


def chain_spec(n: int, betas: Sequence[float] | None = None, jam: float = 1.0) -> NetworkSpec:
    """Linear chain ``1 -> 2 -> ... -> n`` rooted at cell 1."""
    betas = [1.0] * (n - 1) if betas is None else list(betas)
    edges = [(k + 1, k + 2, b) for k, b in enumerate(betas)]
    return NetworkSpec(range(1, n + 1), edges, 1, [jam] * n)
