"""Domain types and the revenue / relevance primitives.

Slots are always held internally in non-increasing position-weight order.
An :class:`Impression` remembers the permutation that produced that order so
plans can be reported back in the caller's slot order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

# Absolute slack on every relevance-feasibility comparison.
FEAS_TOL = 1e-9

PROVENANCE_TAGS = frozenset(
    {
        "redundant",
        "feasible_plus",
        "infeasible_minus",
        "randomized",
        "oracle",
        "baseline",
        "planning",
    }
)


class InstanceError(ValueError):
    """Base class for rejected instance data.

    ``field`` names the offending input location (``items[3].ptr``,
    ``lambda``, ...) so callers can surface a precise diagnostic.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
        self.message = message


class InstanceFormatError(InstanceError):
    """Payload is structurally malformed (wrong types, missing keys, bad JSON)."""


class InstanceValidationError(InstanceError):
    """Payload is well formed but violates a model precondition."""


def _finite(x, name: str) -> float:
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise InstanceFormatError(f"expected a number, got {x!r}", name) from None
    if not math.isfinite(x):
        raise InstanceValidationError("must be finite", name)
    return x


@dataclass(frozen=True)
class Item:
    """One ranking candidate.

    ``ptr`` doubles as the relevance score. ``value`` is the expected revenue;
    it is derived from the rate decomposition when one is given.
    """

    id: str
    ptr: float
    value: float
    price: Optional[float] = None
    take_rate: Optional[float] = None
    ad_rate: Optional[float] = None
    seller: Optional[str] = None

    @classmethod
    def from_rates(
        cls,
        id,
        ptr: float,
        price: float,
        take_rate: float,
        ad_rate: float,
        seller: Optional[str] = None,
    ) -> "Item":
        ptr = _finite(ptr, "ptr")
        price = _finite(price, "price")
        take_rate = _finite(take_rate, "take_rate")
        ad_rate = _finite(ad_rate, "ad_rate")
        if not 0.0 <= ptr <= 1.0:
            raise InstanceValidationError("must lie in [0, 1]", "ptr")
        if price < 0.0:
            raise InstanceValidationError("must be nonnegative", "price")
        if not 0.0 <= take_rate <= 1.0:
            raise InstanceValidationError("must lie in [0, 1]", "take_rate")
        if not 0.0 <= ad_rate <= 1.0:
            raise InstanceValidationError("must lie in [0, 1]", "ad_rate")
        value = ptr * price * (take_rate + ad_rate)
        return cls(str(id), ptr, value, price, take_rate, ad_rate, seller)

    @classmethod
    def synthetic(cls, id, r: float, v: float, seller: Optional[str] = None) -> "Item":
        r = _finite(r, "r")
        v = _finite(v, "v")
        if not 0.0 <= r <= 1.0:
            raise InstanceValidationError("must lie in [0, 1]", "r")
        if v < 0.0:
            raise InstanceValidationError("must be nonnegative", "v")
        return cls(str(id), r, v, seller=seller)

    @property
    def has_rates(self) -> bool:
        return None not in (self.price, self.take_rate, self.ad_rate)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Impression:
    """A single ranking problem: m slots, n candidates, relevance floor ``lam``.

    Use :func:`build_impression` (validating) or :meth:`from_arrays` (fast path
    for synthetic data) rather than the constructor.
    """

    weights: np.ndarray  # h, non-increasing, length m
    relevance: np.ndarray  # r, length n
    values: np.ndarray  # v, length n
    lam: float
    epsilon: float
    items: tuple
    slot_order: tuple  # slot_order[s] = caller slot index of sorted slot s
    _max_rel: float = field(default=math.nan, repr=False)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.relevance.shape[0]

    @property
    def ids(self) -> list:
        return [it.id for it in self.items]

    @classmethod
    def from_arrays(cls, h, r, v, lam: float, epsilon: float = 1e-4) -> "Impression":
        """Wrap raw arrays as synthetic items. ``h`` is sorted if needed."""
        h = np.asarray(h, dtype=float)
        order = np.argsort(-h, kind="stable")
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        items = tuple(Item(str(j), float(r[j]), float(v[j])) for j in range(r.shape[0]))
        return cls._assemble(h[order], r, v, lam, epsilon, items, tuple(int(i) for i in order))

    @classmethod
    def _assemble(cls, h, r, v, lam, epsilon, items, slot_order) -> "Impression":
        h, r, v = _frozen(h), _frozen(r), _frozen(v)
        a = float(np.dot(h, np.sort(r)[::-1][: h.shape[0]]))
        return cls(h, r, v, float(lam), float(epsilon), items, slot_order, a)

    def with_lambda(self, lam: float, epsilon: Optional[float] = None) -> "Impression":
        if not 0.0 <= lam <= 1.0:
            raise InstanceValidationError("must lie in [0, 1]", "lambda")
        eps = self.epsilon if epsilon is None else epsilon
        if not eps > 0.0:
            raise InstanceValidationError("must be positive", "epsilon")
        return Impression(
            self.weights, self.relevance, self.values, float(lam), float(eps),
            self.items, self.slot_order, self._max_rel,
        )

    @property
    def max_relevance(self) -> float:
        return self._max_rel

    @property
    def target(self) -> float:
        """The relevance floor lam * a."""
        return self.lam * self._max_rel

    def to_caller_order(self, plan: "RankingPlan") -> list:
        """Item ids (or None) indexed by the caller's original slot positions."""
        out = [None] * self.m
        for s, j in enumerate(plan.assignment):
            out[self.slot_order[s]] = None if j is None else self.items[j].id
        return out


def build_impression(
    raw_weights: Sequence[float],
    items: Sequence[Item],
    lam: float,
    epsilon: float = 1e-4,
) -> Impression:
    """Validate inputs and normalise slot weights into non-increasing order.

    The sort is stable, so equal weights keep their caller order.
    """
    if len(raw_weights) == 0:
        raise InstanceValidationError("must be non-empty", "position_weights")
    if len(items) == 0:
        raise InstanceValidationError("must be non-empty", "items")
    h = np.array([_finite(w, f"position_weights[{i}]") for i, w in enumerate(raw_weights)])
    for i, w in enumerate(h):
        if w < 0.0:
            raise InstanceValidationError("must be nonnegative", f"position_weights[{i}]")
    if len(h) > len(items):
        raise InstanceValidationError(
            f"position_weights has {len(h)} slots but items has {len(items)} candidates (m > n)",
            "position_weights/items",
        )
    lam = _finite(lam, "lambda")
    if not 0.0 <= lam <= 1.0:
        raise InstanceValidationError("must lie in [0, 1]", "lambda")
    epsilon = _finite(epsilon, "epsilon")
    if not epsilon > 0.0:
        raise InstanceValidationError("must be positive", "epsilon")
    seen = set()
    for j, it in enumerate(items):
        if it.id in seen:
            raise InstanceValidationError(f"duplicate item id {it.id!r}", f"items[{j}].id")
        seen.add(it.id)
    r = np.array([it.ptr for it in items], dtype=float)
    v = np.array([it.value for it in items], dtype=float)
    order = np.argsort(-h, kind="stable")
    return Impression._assemble(h[order], r, v, lam, epsilon, tuple(items), tuple(int(i) for i in order))


@dataclass(frozen=True)
class RankingPlan:
    """Injective slot -> item assignment; ``None`` marks an empty slot."""

    assignment: tuple
    provenance: str = "oracle"

    def __post_init__(self):
        seen = set()
        for j in self.assignment:
            if j is None:
                continue
            if j in seen:
                raise ValueError(f"item {j} assigned to more than one slot")
            if j < 0:
                raise ValueError(f"negative item index {j}")
            seen.add(j)
        if self.provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @classmethod
    def from_indices(cls, idx: Iterable, provenance: str) -> "RankingPlan":
        return cls(tuple(None if j is None else int(j) for j in idx), provenance)

    def filled(self) -> tuple:
        """(slot, item) pairs for every non-empty slot."""
        return tuple((i, j) for i, j in enumerate(self.assignment) if j is not None)

    def as_matrix(self, n: int) -> np.ndarray:
        x = np.zeros((len(self.assignment), n))
        for i, j in self.filled():
            x[i, j] = 1.0
        return x


@dataclass(frozen=True)
class EvalResult:
    revenue: float
    relevance: float
    relevance_ratio: Optional[float]


def _check_plan(imp: Impression, plan: RankingPlan) -> None:
    if len(plan.assignment) != imp.m:
        raise ValueError(f"plan has {len(plan.assignment)} slots, impression has {imp.m}")
    for i, j in plan.filled():
        if j >= imp.n:
            raise IndexError(f"slot {i}: item index {j} out of range [0, {imp.n})")


def evaluate(imp: Impression, plan: RankingPlan) -> EvalResult:
    """Revenue sum(h_i v_j) and relevance sum(h_i r_j) over filled slots."""
    _check_plan(imp, plan)
    pairs = plan.filled()
    if pairs:
        slots = np.fromiter((p[0] for p in pairs), dtype=np.intp, count=len(pairs))
        cols = np.fromiter((p[1] for p in pairs), dtype=np.intp, count=len(pairs))
        hs = imp.weights[slots]
        rev = float(np.dot(hs, imp.values[cols]))
        rel = float(np.dot(hs, imp.relevance[cols]))
    else:
        rev = rel = 0.0
    a = imp.max_relevance
    return EvalResult(rev, rel, rel / a if a > 0 else None)


def max_relevance(imp: Impression) -> float:
    """Largest achievable sum(h_i r_j): top-m relevances paired with sorted weights."""
    return imp.max_relevance
