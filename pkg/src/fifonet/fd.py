"""Demand and supply functions (fundamental diagrams) for cells.

Any diagram must provide a nondecreasing, Lipschitz demand with ``d(0) = 0``
and a nonincreasing, Lipschitz supply with ``s(jam) = 0``. The built-in
family is the trapezoid

    d(x) = min(v x, F)          s(x) = min(F, w (jam - x))

Inputs outside ``[0, jam]`` are clamped before evaluation.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class FundamentalDiagram(ABC):
    """Evaluation contract for one cell."""

    jam: float

    @abstractmethod
    def demand(self, x):
        """Maximal outflow at density ``x``."""

    @abstractmethod
    def supply(self, x):
        """Maximal inflow at density ``x``."""

    @property
    @abstractmethod
    def lipschitz(self) -> float:
        """Common Lipschitz bound of demand and supply."""

    @property
    def capacity(self) -> float:
        return float(max(np.max(self.demand(np.linspace(0, self.jam, 257))), 0.0))

    def breakpoints(self) -> tuple[float, ...]:
        """Densities where demand or supply may fail to be differentiable."""
        return ()

    def well_formed(self) -> str | None:
        """Return a description of a shape defect, or ``None``."""
        return None

    def clamp(self, x):
        return np.clip(x, 0.0, self.jam)


@dataclass(frozen=True)
class PiecewiseAffineFD(FundamentalDiagram):
    """Trapezoidal diagram with free-flow slope ``v``, wave slope ``w``,
    capacity ``F`` and jam density ``jam``."""

    v: float
    w: float
    F: float
    jam: float

    def __post_init__(self):
        for name in ("v", "w", "F", "jam"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    def demand(self, x):
        return np.minimum(self.v * self.clamp(x), self.F)

    def supply(self, x):
        return np.minimum(self.F, self.w * (self.jam - self.clamp(x)))

    @property
    def lipschitz(self) -> float:
        return max(self.v, self.w)

    @property
    def capacity(self) -> float:
        return self.F

    @property
    def critical_density(self) -> float:
        return self.F / self.v

    def breakpoints(self):
        return (self.F / self.v, self.jam - self.F / self.w)

    def well_formed(self):
        least = self.F / self.v + self.F / self.w
        if self.jam < least * (1 - 1e-12):
            return f"jam density {self.jam} < F/v + F/w = {least}"
        return None


def demand_eval(fd: FundamentalDiagram, x):
    return fd.demand(x)


def supply_eval(fd: FundamentalDiagram, x):
    return fd.supply(x)


@dataclass
class Assumption1Report:
    passed: bool
    violation: str | None = None
    max_lipschitz_ratio: float = 0.0

    def __bool__(self):
        return self.passed


def check_assumption1(fd: FundamentalDiagram, n_samples: int = 1000) -> Assumption1Report:
    """Sample ``fd`` on a uniform grid of ``[0, jam]`` and check its shape.

    Confirms ``d(0) = 0``, ``s(jam) = 0``, monotonicity between neighbouring
    samples and an empirical Lipschitz ratio within the declared bound.
    Failures are reported, never raised.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    defect = fd.well_formed()
    if defect is not None:
        return Assumption1Report(False, f"not well formed: {defect}")
    xs = np.linspace(0.0, fd.jam, n_samples)
    d = np.asarray(fd.demand(xs), dtype=float)
    s = np.asarray(fd.supply(xs), dtype=float)
    if d[0] != 0.0:
        return Assumption1Report(False, f"d(0) = {d[0]} != 0")
    if s[-1] != 0.0:
        return Assumption1Report(False, f"s(jam) = {s[-1]} != 0")
    k = np.flatnonzero(np.diff(d) < 0)
    if k.size:
        return Assumption1Report(False, f"demand decreases after x = {xs[k[0]]}")
    k = np.flatnonzero(np.diff(s) > 0)
    if k.size:
        return Assumption1Report(False, f"supply increases after x = {xs[k[0]]}")
    step = np.diff(xs)
    ratio = max(np.max(np.abs(np.diff(d)) / step), np.max(np.abs(np.diff(s)) / step))
    if ratio > fd.lipschitz * (1 + 1e-9):
        return Assumption1Report(
            False, f"Lipschitz ratio {ratio} exceeds declared {fd.lipschitz}", ratio
        )
    return Assumption1Report(True, None, float(ratio))


class FDSet:
    """One fundamental diagram per cell, evaluated on whole state vectors.

    ``demand`` and ``supply`` accept arrays whose last axis runs over cells,
    so batches of states of shape ``(..., n)`` evaluate in one call.
    """

    def __init__(self, diagrams: Sequence[FundamentalDiagram]):
        self.diagrams = tuple(diagrams)
        if not self.diagrams:
            raise ValueError("FDSet needs at least one diagram")
        self.jam = np.array([fd.jam for fd in self.diagrams], dtype=float)
        self.lipschitz = max(fd.lipschitz for fd in self.diagrams)
        self.capacity = np.array([fd.capacity for fd in self.diagrams], dtype=float)
        self._affine = all(type(fd) is PiecewiseAffineFD for fd in self.diagrams)
        if self._affine:
            self.v = np.array([fd.v for fd in self.diagrams])
            self.w = np.array([fd.w for fd in self.diagrams])
            self.F = self.capacity

    @classmethod
    def piecewise_affine(cls, v, w, F, jam) -> "FDSet":
        """Build from per-cell parameter arrays (scalars broadcast)."""
        v, w, F, jam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (v, w, F, jam)))
        return cls([PiecewiseAffineFD(*p) for p in zip(v.ravel(), w.ravel(), F.ravel(), jam.ravel())])

    def __len__(self):
        return len(self.diagrams)

    def __getitem__(self, k) -> FundamentalDiagram:
        return self.diagrams[k]

    def clamp(self, x):
        return np.clip(x, 0.0, self.jam)

    def demand(self, x):
        if self._affine:
            return np.minimum(self.v * self.clamp(x), self.F)
        x = np.asarray(x, dtype=float)
        return np.stack([fd.demand(x[..., e]) for e, fd in enumerate(self.diagrams)], axis=-1)

    def supply(self, x):
        if self._affine:
            return np.minimum(self.F, self.w * (self.jam - self.clamp(x)))
        x = np.asarray(x, dtype=float)
        return np.stack([fd.supply(x[..., e]) for e, fd in enumerate(self.diagrams)], axis=-1)

    def check_against(self, jam_density) -> None:
        """Raise unless the diagrams are well formed and match the network's jam densities."""
        jam_density = np.asarray(jam_density, dtype=float)
        if jam_density.shape != self.jam.shape:
            raise ValueError(
                f"network has {jam_density.size} cells but {len(self)} diagrams were given"
            )
        bad = np.flatnonzero(~np.isclose(jam_density, self.jam, rtol=1e-12, atol=0))
        if bad.size:
            e = int(bad[0])
            raise ValueError(
                f"cell {e + 1}: diagram jam density {self.jam[e]} != network {jam_density[e]}"
            )
        for e, fd in enumerate(self.diagrams):
            defect = fd.well_formed()
            if defect is not None:
                raise ValueError(f"cell {e + 1}: {defect}")
