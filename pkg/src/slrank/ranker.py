"""Dual-bisection ranking.

The relevance constraint is priced by a multiplier ``mu``; for fixed ``mu``
the best ranking simply sorts items by ``v + mu * r``. Bisection on ``mu``
brackets the optimal price between an infeasible response (``mu_minus``)
and a feasible one (``mu_plus``). The deterministic ranker returns the
feasible side; the randomized ranker mixes both sides so the relevance
floor holds in expectation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FEAS_TOL, Impression, RankingPlan

# Denominators below this make the mixing weight meaningless.
ALPHA_DENOM_TOL = 1e-12
_MAX_DOUBLINGS = 1100


def top_m_indices(delta: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest entries, descending, ties to the smaller index.

    Uses a partial selection when m is small relative to n.
    """
    n = delta.shape[0]
    if m > n:
        raise ValueError(f"m={m} exceeds n={n}")
    neg = -delta
    if 2 * m > n:
        return np.argsort(neg, kind="stable")[:m]
    kth = np.partition(neg, m - 1)[m - 1]
    # every entry tied with the m-th value stays a candidate, in index order
    cand = np.flatnonzero(neg <= kth)
    order = np.argsort(neg[cand], kind="stable")
    return cand[order[:m]]


def primal_response(delta, m: int, provenance: str = "feasible_plus") -> RankingPlan:
    """Slot i gets the item with the i-th largest ``delta``."""
    delta = np.asarray(delta, dtype=float)
    if m < 1:
        raise ValueError("m must be at least 1")
    return RankingPlan.from_indices(top_m_indices(delta, m), provenance)


@dataclass(frozen=True)
class DualBracket:
    mu_minus: float
    mu_plus: float
    plan_minus: RankingPlan
    plan_plus: RankingPlan
    alpha: float
    rel_minus: float
    rel_plus: float
    rev_minus: float
    rev_plus: float


@dataclass(frozen=True)
class RankOutcome:
    plan: RankingPlan
    bracket: Optional[DualBracket]
    constraint_redundant: bool
    iterations: int
    wall_time: float  # seconds
    doublings: int = 0
    branch: Optional[str] = None  # "plus" / "minus" for randomized draws
    dual_bound: Optional[float] = None


def mixing_weight(rel_plus: float, rel_minus: float, target: float) -> float:
    """Probability of returning the infeasible side so relevance meets ``target`` on average."""
    denom = rel_plus - rel_minus
    if denom <= ALPHA_DENOM_TOL:
        return 0.0
    return min(1.0, max(0.0, (rel_plus - target) / denom))


def _bisect(h, r, v, m, target, eps):
    """Core loop shared by the deterministic and randomized rankers.

    Returns ``(redundant, mu_lo, mu_hi, idx_lo, idx_hi, iters, doublings)``.
    """
    floor = target - FEAS_TOL
    idx = top_m_indices(v, m)
    if float(np.dot(h, r[idx])) >= floor:
        return True, 0.0, 0.0, idx, idx, 0, 0

    mu_lo, mu_hi = 0.0, 1.0
    idx_lo = idx
    idx_hi = top_m_indices(v + mu_hi * r, m)
    doublings = 0
    while float(np.dot(h, r[idx_hi])) < floor:
        doublings += 1
        if doublings > _MAX_DOUBLINGS:
            raise RuntimeError("failed to bracket the relevance multiplier")
        mu_lo, idx_lo = mu_hi, idx_hi
        mu_hi *= 2.0
        idx_hi = top_m_indices(v + mu_hi * r, m)

    iters = 0
    while mu_hi - mu_lo > eps:
        mu = 0.5 * (mu_lo + mu_hi)
        if mu <= mu_lo or mu >= mu_hi:
            break  # floating-point resolution exhausted
        idx = top_m_indices(v + mu * r, m)
        iters += 1
        if float(np.dot(h, r[idx])) >= floor:
            mu_hi, idx_hi = mu, idx
        else:
            mu_lo, idx_lo = mu, idx
    return False, mu_lo, mu_hi, idx_lo, idx_hi, iters, doublings


def _bracket(imp: Impression, mu_lo, mu_hi, idx_lo, idx_hi) -> DualBracket:
    h, r, v = imp.weights, imp.relevance, imp.values
    rel_lo, rel_hi = float(np.dot(h, r[idx_lo])), float(np.dot(h, r[idx_hi]))
    rev_lo, rev_hi = float(np.dot(h, v[idx_lo])), float(np.dot(h, v[idx_hi]))
    return DualBracket(
        mu_minus=mu_lo,
        mu_plus=mu_hi,
        plan_minus=RankingPlan.from_indices(idx_lo, "infeasible_minus"),
        plan_plus=RankingPlan.from_indices(idx_hi, "feasible_plus"),
        alpha=mixing_weight(rel_hi, rel_lo, imp.target),
        rel_minus=rel_lo,
        rel_plus=rel_hi,
        rev_minus=rev_lo,
        rev_plus=rev_hi,
    )


def rank_feasible(imp: Impression) -> RankOutcome:
    """Feasible integral ranking from the primal response at ``mu_plus``."""
    t0 = time.perf_counter()
    redundant, mu_lo, mu_hi, idx_lo, idx_hi, iters, dbl = _bisect(
        imp.weights, imp.relevance, imp.values, imp.m, imp.target, imp.epsilon
    )
    if redundant:
        plan = RankingPlan.from_indices(idx_hi, "redundant")
        return RankOutcome(plan, None, True, 0, time.perf_counter() - t0)
    bracket = _bracket(imp, mu_lo, mu_hi, idx_lo, idx_hi)
    return RankOutcome(bracket.plan_plus, bracket, False, iters, time.perf_counter() - t0, dbl)


def choose_branch(bracket: DualBracket, u: float) -> str:
    return "plus" if u > bracket.alpha else "minus"


def rank_randomized(imp: Impression, rng_seed: int) -> RankOutcome:
    """Return the feasible side with probability 1 - alpha, else the infeasible side.

    A single uniform draw from ``numpy.random.default_rng(rng_seed)`` decides.
    """
    t0 = time.perf_counter()
    base = rank_feasible(imp)
    if base.constraint_redundant:
        return base
    u = float(np.random.default_rng(rng_seed).random())
    branch = choose_branch(base.bracket, u)
    chosen = base.bracket.plan_plus if branch == "plus" else base.bracket.plan_minus
    plan = RankingPlan(chosen.assignment, "randomized")
    return RankOutcome(
        plan, base.bracket, False, base.iterations, time.perf_counter() - t0,
        base.doublings, branch,
    )


def dual_value_and_subgradient(imp: Impression, mu: float):
    """Lagrangian dual D(mu), its subgradient Rel(X(mu)) - lam*a, and X(mu)."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    h, r, v = imp.weights, imp.relevance, imp.values
    idx = top_m_indices(v + mu * r, imp.m)
    rel = float(np.dot(h, r[idx]))
    rev = float(np.dot(h, v[idx]))
    g = rel - imp.target
    return rev + mu * g, g, RankingPlan.from_indices(idx, "feasible_plus" if g >= -FEAS_TOL else "infeasible_minus")


def crossing_dual_bound(imp: Impression, bracket: DualBracket) -> float:
    """Upper bound on the LP optimum from the bracket.

    Evaluates D at the multiplier where the Lagrangian lines of the two
    bracket plans intersect; the bound is tight whenever the bracket holds a
    single breakpoint.
    """
    drel = bracket.rel_plus - bracket.rel_minus
    if drel > ALPHA_DENOM_TOL:
        mu = (bracket.rev_minus - bracket.rev_plus) / drel
        mu = min(max(mu, bracket.mu_minus), bracket.mu_plus)
    else:
        mu = bracket.mu_plus
    d, _, _ = dual_value_and_subgradient(imp, mu)
    return d


def lp_optimum(imp: Impression, bracket: DualBracket, max_cuts: int = 500) -> float:
    """Exact optimum of the LP relaxation, by cutting planes on the dual.

    D is convex and piecewise linear in mu, with one line per primal response.
    Starting from the two bracket lines, each step evaluates D where the
    current left and right lines cross and keeps the new line on the side of
    its slope. When D at the crossing equals the model value the crossing is a
    minimizer, and by LP duality D there is the LP optimum. The number of
    steps is bounded by the number of breakpoints inside the bracket.
    """
    target = imp.target
    lines = [(bracket.rev_minus, bracket.rel_minus - target), (bracket.rev_plus, bracket.rel_plus - target)]
    (c_lo, s_lo), (c_hi, s_hi) = lines
    best = math.inf
    for _ in range(max_cuts):
        if s_hi - s_lo <= ALPHA_DENOM_TOL:
            mu = bracket.mu_plus
        else:
            mu = (c_lo - c_hi) / (s_hi - s_lo)
            mu = min(max(mu, bracket.mu_minus), bracket.mu_plus)
        d, g, plan = dual_value_and_subgradient(imp, mu)
        best = min(best, d)
        model = max(c_lo + mu * s_lo, c_hi + mu * s_hi)
        if d <= model + 1e-12 * max(1.0, abs(d)):
            return d
        c = d - mu * g
        if g < 0:
            c_lo, s_lo = c, g
        else:
            c_hi, s_hi = c, g
    return best
