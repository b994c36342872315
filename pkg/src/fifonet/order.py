"""The polyhedral cone ``{x : P x >= 0}`` and the partial order it induces.

``x`` dominates ``y`` when every component of ``P (x - y)`` is nonnegative,
i.e. when no cell has less cumulative future demand under ``x`` than under
``y``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, StateOutOfBox
from .network import Network

DEFAULT_TOL = 1e-9


class Relation(enum.Enum):
    GREATER_EQUAL = "greater_equal"
    LESS_EQUAL = "less_equal"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class OrderResult:
    relation: Relation
    margin: np.ndarray
    # (component with P(x-y) > tol, component with P(x-y) < -tol), 0-based
    witness: tuple[int, int] | None = None

    @property
    def geq(self) -> bool:
        return self.relation in (Relation.GREATER_EQUAL, Relation.EQUAL)

    @property
    def leq(self) -> bool:
        return self.relation in (Relation.LESS_EQUAL, Relation.EQUAL)


@dataclass(frozen=True, eq=False)
class ConeOrder:
    """Partial order of the cone ``{x : P x >= 0}`` with absolute tolerance ``tol``.

    ``upper`` optionally carries the jam densities so that :meth:`from_z`
    can reject states outside the box.
    """

    R: np.ndarray
    P: np.ndarray
    tol: float = DEFAULT_TOL
    upper: np.ndarray | None = None

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        n = self.P.shape[0]
        if self.R.shape != (n, n) or self.P.shape != (n, n):
            raise DimensionMismatch("R and P must be square and of equal size")

    @classmethod
    def from_network(cls, net: Network, tol: float = DEFAULT_TOL) -> "ConeOrder":
        return cls(net.R, net.P, tol, net.jam)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def with_tol(self, tol: float) -> "ConeOrder":
        return ConeOrder(self.R, self.P, tol, self.upper)

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.n,):
            raise DimensionMismatch(f"expected trailing dimension {self.n}, got shape {v.shape}")
        return v

    def margin(self, x, y) -> np.ndarray:
        """``P (x - y)``; broadcasts over leading axes."""
        return (self._check(x) - self._check(y)) @ self.P.T

    def compare(self, x, y) -> OrderResult:
        u = self.margin(x, y)
        if u.ndim != 1:
            raise DimensionMismatch("compare expects single state vectors")
        geq = bool(np.all(u >= -self.tol))
        leq = bool(np.all(u <= self.tol))
        if geq and leq:
            return OrderResult(Relation.EQUAL, u)
        if geq:
            return OrderResult(Relation.GREATER_EQUAL, u)
        if leq:
            return OrderResult(Relation.LESS_EQUAL, u)
        return OrderResult(Relation.INCOMPARABLE, u, (int(np.argmax(u)), int(np.argmin(u))))

    def geq(self, x, y) -> bool:
        return bool(np.all(self.margin(x, y) >= -self.tol))

    def to_z(self, x) -> np.ndarray:
        return self._check(x) @ self.P.T

    def from_z(self, z) -> np.ndarray:
        x = self._check(z) @ (np.eye(self.n) - self.R).T
        if self.upper is not None:
            slack = 1e-9 * self.upper
            if np.any(x < -slack) or np.any(x > self.upper + slack):
                raise StateOutOfBox("(I - R) z lies outside the state box")
        return x


def cone_compare(order: ConeOrder, x, y) -> OrderResult:
    return order.compare(x, y)


def to_z(order: ConeOrder, x) -> np.ndarray:
    return order.to_z(x)


def from_z(order: ConeOrder, z) -> np.ndarray:
    return order.from_z(z)
