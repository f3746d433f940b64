"""Exact ground truth for small instances.

``brute_force_mip`` enumerates every ranking. ``exact_lp`` builds the LP
relaxation optimum directly: the optimal multiplier sits on a pairwise
indifference value, and the optimum mixes the two primal responses on
either side of it.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FEAS_TOL, Impression, RankingPlan
from .ranker import mixing_weight, top_m_indices

BRUTE_MAX_N = 10
BRUTE_MAX_M = 4
LP_MAX_N = 200
# Relative spacing under which two indifference values count as equal.
DEGENERACY_RTOL = 1e-12


class OracleSizeError(ValueError):
    pass


class DegenerateInstanceWarning(UserWarning):
    pass


def brute_force_mip(imp: Impression):
    """Revenue-maximal relevance-feasible ranking by exhaustive enumeration.

    Partial rankings (empty slots) are included. Among optimal rankings the
    lexicographically smallest assignment wins, with an empty slot ordered
    after every item.

    Returns ``(plan, opt_value)``.
    """
    m, n = imp.m, imp.n
    if n > BRUTE_MAX_N or m > BRUTE_MAX_M:
        raise OracleSizeError(f"brute force limited to n <= {BRUTE_MAX_N}, m <= {BRUTE_MAX_M}")
    h, r, v = imp.weights.tolist(), imp.relevance.tolist(), imp.values.tolist()
    floor = imp.target - FEAS_TOL
    best, best_val = None, -math.inf
    choices = list(range(n)) + [None]
    for assign in itertools.product(choices, repeat=m):
        used = [j for j in assign if j is not None]
        if len(used) != len(set(used)):
            continue
        rel = rev = 0.0
        for i, j in enumerate(assign):
            if j is not None:
                rel += h[i] * r[j]
                rev += h[i] * v[j]
        if rel < floor:
            continue
        if best is None or rev > best_val + 1e-12 * max(1.0, abs(best_val)):
            best, best_val = assign, rev
    return RankingPlan(tuple(best), "oracle"), best_val


@dataclass(frozen=True)
class BreakpointSet:
    values: np.ndarray  # distinct, strictly increasing
    delta_min: float
    degenerate: bool
    pair_count: int


def _pair_values(imp: Impression, scope: str):
    r, v = imp.relevance, imp.values
    n = imp.n
    j, k = np.triu_indices(n, 1)
    if scope == "top_m":
        top = np.zeros(n, dtype=bool)
        top[np.argsort(-r, kind="stable")[: imp.m]] = True
        keep = top[j] | top[k]
        j, k = j[keep], k[keep]
    elif scope != "all":
        raise ValueError(f"unknown scope {scope!r}")
    dr = r[k] - r[j]
    ok = dr != 0
    mu = (v[j][ok] - v[k][ok]) / dr[ok]
    return mu[np.isfinite(mu) & (mu > 0)]


def breakpoints(imp: Impression, scope: str = "top_m") -> BreakpointSet:
    """Positive pairwise indifference values (v_j - v_k) / (r_k - r_j).

    ``scope="top_m"`` keeps pairs with at least one member among the m most
    relevant items; ``scope="all"`` keeps every pair, which is what governs
    the ordering of ``v + mu * r`` and hence the bisection.
    """
    mu = np.sort(_pair_values(imp, scope))
    if mu.size == 0:
        return BreakpointSet(mu, math.inf, False, 0)
    gaps = np.diff(mu)
    same = gaps <= DEGENERACY_RTOL * np.maximum(1.0, mu[1:])
    distinct = mu[np.concatenate(([True], ~same))]
    dmin = float(np.min(np.diff(distinct))) if distinct.size > 1 else math.inf
    return BreakpointSet(distinct, dmin, bool(same.any()), int(mu.size))


@dataclass(frozen=True)
class LpSolution:
    entries: dict  # (slot, item) -> weight, nonzero entries only
    objective: float
    mu_star: float
    case_tag: str  # A, B1, B2, B3, or "degenerate"
    fractional_alpha: Optional[float]
    relevance: float
    degenerate: bool = False

    def as_matrix(self, m: int, n: int) -> np.ndarray:
        x = np.zeros((m, n))
        for (i, j), w in self.entries.items():
            x[i, j] = w
        return x

    def fractional_cells(self, tol: float = 1e-12) -> list:
        return sorted(c for c, w in self.entries.items() if tol < w < 1.0 - tol)


def _classify(idx_plus, idx_minus, m: int) -> str:
    diff = [i for i in range(m) if idx_plus[i] != idx_minus[i]]
    if diff == [m - 1]:
        return "B1"
    if len(diff) == 2 and diff[1] == diff[0] + 1:
        s = diff[0]
        if idx_plus[s] == idx_minus[s + 1] and idx_plus[s + 1] == idx_minus[s]:
            return "B2"
    return "degenerate"


def exact_lp(imp: Impression, max_n: int = LP_MAX_N) -> LpSolution:
    """Optimal solution of the LP relaxation, in closed form.

    The multiplier is located by a binary search over the open intervals
    between consecutive positive indifference values (the response is
    constant on each). The optimum is the mix of the responses just left
    and just right of that value that puts relevance exactly on the floor.
    This construction stays optimal on degenerate instances; those are
    tagged and warned about.
    """
    if imp.n > max_n:
        raise OracleSizeError(f"exact LP oracle limited to n <= {max_n}")
    h, r, v, m = imp.weights, imp.relevance, imp.values, imp.m
    target = imp.target
    floor = target - FEAS_TOL
    bps = breakpoints(imp, scope="all")
    if bps.degenerate:
        warnings.warn("instance violates nondegeneracy of indifference values", DegenerateInstanceWarning)

    def rel(idx):
        return float(np.dot(h, r[idx]))

    def rev(idx):
        return float(np.dot(h, v[idx]))

    idx0 = top_m_indices(v, m)
    if rel(idx0) >= floor:
        entries = {(i, int(j)): 1.0 for i, j in enumerate(idx0)}
        return LpSolution(entries, rev(idx0), 0.0, "A", None, rel(idx0), bps.degenerate)

    b = bps.values
    if b.size == 0:
        raise RuntimeError("relevance floor unreachable with no indifference values")
    probes = np.empty(b.size + 1)
    probes[0] = 0.5 * b[0]
    probes[1:-1] = 0.5 * (b[:-1] + b[1:])
    probes[-1] = b[-1] + max(1.0, b[-1])

    def resp(k):
        return top_m_indices(v + probes[k] * r, m)

    lo, hi = 0, b.size  # smallest feasible interval index lies in [lo, hi]
    if rel(resp(hi)) < floor:
        raise RuntimeError("relevance floor unreachable")
    while lo < hi:
        mid = (lo + hi) // 2
        if rel(resp(mid)) >= floor:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    idx_plus = resp(k)
    idx_minus = resp(k - 1) if k > 0 else idx0
    mu_star = float(b[k - 1]) if k > 0 else 0.0

    rel_p, rel_m = rel(idx_plus), rel(idx_minus)
    alpha = mixing_weight(rel_p, rel_m, target)
    if alpha <= 1e-12:
        entries = {(i, int(j)): 1.0 for i, j in enumerate(idx_plus)}
        return LpSolution(entries, rev(idx_plus), mu_star, "B3", None, rel_p, bps.degenerate)

    entries: dict = {}
    for i in range(m):
        jp, jm = int(idx_plus[i]), int(idx_minus[i])
        entries[(i, jp)] = entries.get((i, jp), 0.0) + (1.0 - alpha)
        entries[(i, jm)] = entries.get((i, jm), 0.0) + alpha
    tag = _classify(idx_plus, idx_minus, m)
    objective = (1.0 - alpha) * rev(idx_plus) + alpha * rev(idx_minus)
    relevance = (1.0 - alpha) * rel_p + alpha * rel_m
    return LpSolution(entries, objective, mu_star, tag, alpha, relevance, bps.degenerate)
