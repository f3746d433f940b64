"""Planning across many impressions under global seller/consumer constraints.

Global constraints (seller inventory caps, seller revenue targets, minimum
seller exposure, minimum seller-attributed placements per consumer) are
priced offline by dual variables. Online, each impression is ranked with the
priced terms folded into its objective, keeping its own relevance floor.

Seller-attributed revenue counts the full item value when the item is listed
by that seller. Exposure counts are placement counts, summed over impressions.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, TextIO

import numpy as np

from .core import FEAS_TOL, Impression, RankingPlan
from .ranker import DualBracket, RankOutcome, mixing_weight, top_m_indices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Seller:
    """A selected seller. ``None`` bounds mean the constraint is absent."""

    id: str
    inventory_limit: Optional[float] = None
    revenue_target: Optional[float] = None
    min_consumers: Optional[float] = None


@dataclass(frozen=True)
class Consumer:
    id: str
    min_sellers: Optional[float] = None


@dataclass(frozen=True)
class Duals:
    xi: tuple  # inventory caps, per seller
    nu: tuple  # revenue targets, per seller
    eta: tuple  # minimum exposure, per seller
    theta: tuple  # minimum seller placements, per consumer

    @classmethod
    def zeros(cls, n_sellers: int, n_consumers: int) -> "Duals":
        z = (0.0,) * n_sellers
        return cls(z, z, z, (0.0,) * n_consumers)

    def vector(self) -> np.ndarray:
        return np.array(self.xi + self.nu + self.eta + self.theta, dtype=float)

    @classmethod
    def from_vector(cls, x, n_sellers: int) -> "Duals":
        x = [float(t) for t in x]
        k = n_sellers
        return cls(tuple(x[:k]), tuple(x[k:2 * k]), tuple(x[2 * k:3 * k]), tuple(x[3 * k:]))


@dataclass(frozen=True)
class PlannedImpression:
    impression: Impression
    consumer: str


@dataclass(frozen=True)
class GlobalPlanModel:
    impressions: tuple
    sellers: tuple
    consumers: tuple
    duals: Duals = None
    seller_index: dict = field(init=False, repr=False, compare=False)
    consumer_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "impressions", tuple(self.impressions))
        object.__setattr__(self, "sellers", tuple(self.sellers))
        object.__setattr__(self, "consumers", tuple(self.consumers))
        sidx = {s.id: k for k, s in enumerate(self.sellers)}
        cidx = {c.id: g for g, c in enumerate(self.consumers)}
        if len(sidx) != len(self.sellers):
            raise ValueError("duplicate seller id")
        if len(cidx) != len(self.consumers):
            raise ValueError("duplicate consumer id")
        for s in self.sellers:
            for name in ("inventory_limit", "revenue_target", "min_consumers"):
                val = getattr(s, name)
                if val is not None and not (math.isfinite(val) and val >= 0):
                    raise ValueError(f"seller {s.id}: {name} must be finite and nonnegative")
        for c in self.consumers:
            if c.min_sellers is not None and not (math.isfinite(c.min_sellers) and c.min_sellers >= 0):
                raise ValueError(f"consumer {c.id}: min_sellers must be finite and nonnegative")
        for t, pi in enumerate(self.impressions):
            if pi.consumer not in cidx:
                raise ValueError(f"impression {t}: unknown consumer {pi.consumer!r}")
            for j, it in enumerate(pi.impression.items):
                if it.seller is not None and it.seller not in sidx:
                    raise ValueError(f"impression {t} item {j}: unknown seller {it.seller!r}")
        duals = self.duals or Duals.zeros(len(self.sellers), len(self.consumers))
        K, G = len(self.sellers), len(self.consumers)
        if not (len(duals.xi) == len(duals.nu) == len(duals.eta) == K and len(duals.theta) == G):
            raise ValueError("dual vector lengths do not match sellers/consumers")
        if any(d < 0 or not math.isfinite(d) for d in duals.vector()):
            raise ValueError("dual prices must be finite and nonnegative")
        object.__setattr__(self, "duals", duals)
        object.__setattr__(self, "seller_index", sidx)
        object.__setattr__(self, "consumer_index", cidx)

    def with_duals(self, duals: Duals) -> "GlobalPlanModel":
        return replace(self, duals=duals)

    def item_sellers(self, imp: Impression) -> np.ndarray:
        """Seller index per item, -1 when the item's seller is not selected."""
        return np.array(
            [-1 if it.seller is None else self.seller_index[it.seller] for it in imp.items],
            dtype=np.intp,
        )


@dataclass(frozen=True)
class AdjustedCoefficients:
    a_coef: np.ndarray  # multiplies the slot weight
    b_coef: np.ndarray  # slot-independent


def adjust_coefficients(imp: Impression, model: GlobalPlanModel, consumer: str) -> AdjustedCoefficients:
    """Fold dual prices into per-item coefficients.

    a_j = v_j (1 + nu_k), b_j = -xi_k + eta_k + theta_g for items of a selected
    seller k; other items keep a_j = v_j, b_j = 0.
    """
    if consumer not in model.consumer_index:
        raise KeyError(f"unknown consumer {consumer!r}")
    for it in imp.items:
        if it.seller is not None and it.seller not in model.seller_index:
            raise KeyError(f"unknown seller {it.seller!r}")
    d = model.duals
    ks = model.item_sellers(imp)
    sold = ks >= 0
    xi, nu, eta = (np.append(np.asarray(x, dtype=float), 0.0) for x in (d.xi, d.nu, d.eta))
    theta = d.theta[model.consumer_index[consumer]]
    a = imp.values * (1.0 + nu[ks])
    b = np.where(sold, -xi[ks] + eta[ks] + theta, 0.0)
    return AdjustedCoefficients(a, b)


def _prefix_table(weights: np.ndarray, a: np.ndarray, b: np.ndarray, cap: int) -> np.ndarray:
    # f[i, p]: best value using exactly p of the first i items, the k-th chosen
    # item sitting on weights[k-1]
    f = np.full((a.shape[0] + 1, cap + 1), -np.inf)
    f[0, 0] = 0.0
    w = weights[:cap]
    for i in range(a.shape[0]):
        f[i + 1] = f[i]
        np.maximum(f[i, 1:], f[i, :cap] + w * a[i] + b[i], out=f[i + 1, 1:])
    return f


def _backtrack(f: np.ndarray, p: int) -> list:
    chosen = []
    for i in range(f.shape[0] - 1, 0, -1):
        if p == 0:
            break
        if f[i, p] > f[i - 1, p]:  # strictly better only when item i-1 is included
            chosen.append(i - 1)
            p -= 1
    return chosen[::-1]


def dp_assign(h, a_coef, b_coef, m: int) -> RankingPlan:
    """Exact maximiser of sum h_i a_j(i) + sum b_j(i) over (partial) rankings.

    Nonnegative-``a`` items fill slots from the top in descending ``a``;
    negative-``a`` items fill from the bottom, most negative last. Each side
    is a prefix dynamic program over the sorted items; the two sides are
    then combined over all slot splits. Ties favour more filled slots, then
    lower item indices.
    """
    h = np.asarray(h, dtype=float)
    a = np.asarray(a_coef, dtype=float)
    b = np.asarray(b_coef, dtype=float)
    n = a.shape[0]
    if m > n:
        raise ValueError(f"m={m} exceeds n={n}")
    if h.shape[0] != m:
        raise ValueError("weight vector length must equal m")
    if not b.any() and (a >= 0).all():
        return RankingPlan.from_indices(top_m_indices(a, m), "planning")

    pos = np.flatnonzero(a >= 0)
    pos = pos[np.argsort(-a[pos], kind="stable")]
    neg = np.flatnonzero(a < 0)
    neg = neg[np.argsort(a[neg], kind="stable")]
    f_top = _prefix_table(h, a[pos], b[pos], min(m, pos.size))
    f_bot = _prefix_table(h[::-1], a[neg], b[neg], min(m, neg.size))
    top, bot = f_top[-1], f_bot[-1]

    best, best_key = None, None
    for p in range(top.shape[0]):
        for q in range(min(bot.shape[0], m - p + 1)):
            val = top[p] + bot[q]
            if not math.isfinite(val):
                continue
            key = (val, p + q, p)
            if best_key is None or key > best_key:
                best, best_key = (p, q), key
    p, q = best
    assign = [None] * m
    for slot, k in enumerate(_backtrack(f_top, p)):
        assign[slot] = int(pos[k])
    for depth, k in enumerate(_backtrack(f_bot, q)):
        assign[m - 1 - depth] = int(neg[k])
    return RankingPlan(tuple(assign), "planning")


def _plan_arrays(plan: RankingPlan):
    pairs = plan.filled()
    slots = np.array([p[0] for p in pairs], dtype=np.intp)
    items = np.array([p[1] for p in pairs], dtype=np.intp)
    return slots, items


_MAX_DOUBLINGS = 1100


def rank_with_coefficients(imp: Impression, a_coef, b_coef) -> RankOutcome:
    """Dual bisection on the relevance multiplier with ``dp_assign`` inside.

    ``dual_bound`` on the outcome is the smallest Lagrangian dual value seen,
    an upper bound on the relevance-constrained LP optimum of the adjusted
    objective.
    """
    t0 = time.perf_counter()
    h, r = imp.weights, imp.relevance
    a = np.asarray(a_coef, dtype=float)
    b = np.asarray(b_coef, dtype=float)
    m, target = imp.m, imp.target
    floor = target - FEAS_TOL

    def solve(mu):
        plan = dp_assign(h, a + mu * r, b, m)
        s, j = _plan_arrays(plan)
        rel = float(np.dot(h[s], r[j]))
        obj = float(np.dot(h[s], a[j]) + b[j].sum())
        return plan, rel, obj

    bound = math.inf

    def probe(mu):
        nonlocal bound
        plan, rel, obj = solve(mu)
        bound = min(bound, obj + mu * (rel - target))
        return plan, rel, obj

    plan0, rel0, obj0 = probe(0.0)
    if rel0 >= floor:
        return RankOutcome(plan0, None, True, 0, time.perf_counter() - t0, dual_bound=bound)

    mu_lo, mu_hi = 0.0, 1.0
    lo = (plan0, rel0, obj0)
    hi = probe(mu_hi)
    doublings = 0
    while hi[1] < floor:
        doublings += 1
        if doublings > _MAX_DOUBLINGS:
            raise RuntimeError("failed to bracket the relevance multiplier")
        mu_lo, lo = mu_hi, hi
        mu_hi *= 2.0
        hi = probe(mu_hi)
    iters = 0
    while mu_hi - mu_lo > imp.epsilon:
        mu = 0.5 * (mu_lo + mu_hi)
        if mu <= mu_lo or mu >= mu_hi:
            break
        cur = probe(mu)
        iters += 1
        if cur[1] >= floor:
            mu_hi, hi = mu, cur
        else:
            mu_lo, lo = mu, cur
    drel = hi[1] - lo[1]
    if drel > 1e-12:
        mu_c = min(max((lo[2] - hi[2]) / drel, mu_lo), mu_hi)
        probe(mu_c)
    bracket = DualBracket(
        mu_lo, mu_hi,
        RankingPlan(lo[0].assignment, "infeasible_minus"),
        RankingPlan(hi[0].assignment, "feasible_plus"),
        mixing_weight(hi[1], lo[1], target),
        lo[1], hi[1], lo[2], hi[2],
    )
    return RankOutcome(hi[0], bracket, False, iters, time.perf_counter() - t0, doublings, dual_bound=bound)


def rank_with_duals(imp: Impression, model: GlobalPlanModel, consumer: str) -> RankOutcome:
    coef = adjust_coefficients(imp, model, consumer)
    return rank_with_coefficients(imp, coef.a_coef, coef.b_coef)


# --- global constraint accounting ---------------------------------------------


@dataclass(frozen=True)
class Usage:
    inventory: np.ndarray  # placements per seller
    revenue: np.ndarray  # attributed revenue per seller
    consumer_placements: np.ndarray  # selected-seller placements per consumer
    total_revenue: float


def usage(model: GlobalPlanModel, plans: Sequence[RankingPlan]) -> Usage:
    K, G = len(model.sellers), len(model.consumers)
    inv, rev, cons = np.zeros(K), np.zeros(K), np.zeros(G)
    total = 0.0
    for pi, plan in zip(model.impressions, plans):
        imp = pi.impression
        ks = model.item_sellers(imp)
        g = model.consumer_index[pi.consumer]
        for i, j in plan.filled():
            val = imp.weights[i] * imp.values[j]
            total += val
            k = ks[j]
            if k >= 0:
                inv[k] += 1
                rev[k] += val
                cons[g] += 1
    return Usage(inv, rev, cons, float(total))


def _bounds(model: GlobalPlanModel):
    def arr(vals):
        return np.array([math.nan if x is None else x for x in vals], dtype=float)

    L = arr(s.inventory_limit for s in model.sellers)
    I = arr(s.revenue_target for s in model.sellers)
    C = arr(s.min_consumers for s in model.sellers)
    S = arr(c.min_sellers for c in model.consumers)
    return L, I, C, S


def violations(model: GlobalPlanModel, plans: Sequence[RankingPlan]) -> dict:
    """Amount by which each present global constraint is violated (0 when met)."""
    u = usage(model, plans)
    L, I, C, S = _bounds(model)
    out = {}
    for k, s in enumerate(model.sellers):
        if not math.isnan(L[k]):
            out[f"inventory[{s.id}]"] = max(0.0, u.inventory[k] - L[k])
        if not math.isnan(I[k]):
            out[f"revenue[{s.id}]"] = max(0.0, I[k] - u.revenue[k])
        if not math.isnan(C[k]):
            out[f"min_consumers[{s.id}]"] = max(0.0, C[k] - u.inventory[k])
    for g, c in enumerate(model.consumers):
        if not math.isnan(S[g]):
            out[f"min_sellers[{c.id}]"] = max(0.0, S[g] - u.consumer_placements[g])
    return out


@dataclass(frozen=True)
class AscentConfig:
    step: float = 1.0
    iterations: int = 200
    tol: float = 1e-9


@dataclass(frozen=True)
class DualEstimate:
    model: GlobalPlanModel  # carries the best duals found
    dual_bound: float
    history: tuple  # dual bound per iteration
    plans: tuple  # plans induced by the returned duals
    violations: dict
    primal_value: float  # revenue of the induced plans
    best_feasible_value: Optional[float]  # best globally feasible revenue seen
    gap: Optional[float]
    iterations: int


def _subgradient(model, u: Usage):
    L, I, C, S = _bounds(model)
    g_xi = np.where(np.isnan(L), 0.0, L - u.inventory)
    g_nu = np.where(np.isnan(I), 0.0, u.revenue - I)
    g_eta = np.where(np.isnan(C), 0.0, u.inventory - C)
    g_th = np.where(np.isnan(S), 0.0, u.consumer_placements - S)
    return np.concatenate([g_xi, g_nu, g_eta, g_th])


def _constant(model, duals: Duals) -> float:
    L, I, C, S = (np.nan_to_num(x, nan=0.0) for x in _bounds(model))
    return float(
        np.dot(duals.xi, L) - np.dot(duals.nu, I) - np.dot(duals.eta, C) - np.dot(duals.theta, S)
    )


def _inner(model: GlobalPlanModel):
    outs = [rank_with_duals(pi.impression, model, pi.consumer) for pi in model.impressions]
    bound = sum(o.dual_bound for o in outs) + _constant(model, model.duals)
    return [o.plan for o in outs], bound


def estimate_duals(model: GlobalPlanModel, config: AscentConfig = AscentConfig()) -> DualEstimate:
    """Projected subgradient descent on the Lagrangian dual of the global constraints.

    Each iteration ranks every impression under the current prices (each
    impression keeping its relevance floor), then moves every price against
    its constraint slack with step ``config.step / sqrt(t)``, clipped at zero.
    The duals with the smallest dual bound are returned.
    """
    if not model.impressions:
        raise ValueError("model has no impressions")
    if config.iterations < 1 or not config.step > 0:
        raise ValueError("need iterations >= 1 and a positive step")
    K = len(model.sellers)
    L, I, C, S = _bounds(model)
    present = ~np.isnan(np.concatenate([L, I, C, S]))
    x = model.duals.vector()
    x[~present] = 0.0

    best_x, best_bound = x.copy(), math.inf
    best_feasible = None
    history = []
    it = 0
    for it in range(1, config.iterations + 1):
        cur = model.with_duals(Duals.from_vector(x, K))
        plans, bound = _inner(cur)
        if not math.isfinite(bound):
            raise FloatingPointError(f"non-finite dual bound at iteration {it}")
        history.append(min(bound, best_bound))
        if bound < best_bound:
            best_x, best_bound = x.copy(), bound
        u = usage(cur, plans)
        if all(v <= config.tol for v in violations(cur, plans).values()):
            if best_feasible is None or u.total_revenue > best_feasible:
                best_feasible = u.total_revenue
        g = _subgradient(cur, u)
        if best_feasible is not None and best_bound - best_feasible <= config.tol * max(1.0, abs(best_feasible)):
            break
        x = np.maximum(0.0, x - config.step / math.sqrt(it) * g)
        x[~present] = 0.0
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite dual prices at iteration {it}")

    final = model.with_duals(Duals.from_vector(best_x, K))
    plans, _ = _inner(final)
    viol = violations(final, plans)
    value = usage(final, plans).total_revenue
    if all(v <= config.tol for v in viol.values()):
        best_feasible = value if best_feasible is None else max(best_feasible, value)
    gap = None if best_feasible is None else best_bound - best_feasible
    return DualEstimate(
        final, best_bound, tuple(history), tuple(plans), viol, value, best_feasible, gap, it
    )


# --- offline LP export ------------------------------------------------------------


@dataclass(frozen=True)
class LpExportStats:
    variables: int
    rows: int


def expected_dimensions(model: GlobalPlanModel) -> LpExportStats:
    """Closed-form variable and row counts of the offline LP."""
    T = len(model.impressions)
    nvar = sum(pi.impression.m * pi.impression.n for pi in model.impressions)
    caps = sum(pi.impression.m + pi.impression.n for pi in model.impressions)
    seller_rows = sum(
        (s.inventory_limit is not None) + (s.revenue_target is not None) + (s.min_consumers is not None)
        for s in model.sellers
    )
    consumer_rows = sum(c.min_sellers is not None for c in model.consumers)
    return LpExportStats(nvar, T + caps + seller_rows + consumer_rows)


def _fmt(x: float) -> str:
    x = float(x)
    if x == 0:
        x = 0.0  # no "-0"
    return repr(x)


class _RowWriter:
    def __init__(self, sink: TextIO, per_line: int = 8):
        self.sink = sink
        self.per_line = per_line

    def expr(self, terms):
        """Write ``coef var`` terms, wrapping long expressions."""
        if not terms:
            return "0 x_0_0_0"
        parts = []
        for k, (c, name) in enumerate(terms):
            c = float(c)
            sign = "-" if c < 0 else "+"
            tok = f"{sign} {_fmt(abs(c))} {name}"
            if k == 0 and sign == "+":
                tok = f"{_fmt(c)} {name}"
            parts.append(tok)
        lines = [" ".join(parts[i:i + self.per_line]) for i in range(0, len(parts), self.per_line)]
        return "\n   ".join(lines)

    def row(self, name, terms, sense, rhs):
        self.sink.write(f" {name}: {self.expr(terms)} {sense} {_fmt(rhs)}\n")


def export_offline_lp(model: GlobalPlanModel, sink: TextIO) -> LpExportStats:
    """Write the offline planning LP in CPLEX LP text format.

    Variable ``x_t_i_j`` is the weight of item j in (sorted) slot i of
    impression t. Rows, in order: one relevance floor per impression, one cap
    per (impression, item), one cap per (impression, slot), then for each
    seller its inventory / revenue / exposure rows (only those whose bound is
    set), then each consumer's minimum-placement row (when set).
    """
    w = _RowWriter(sink)
    imps = [pi.impression for pi in model.impressions]

    def var(t, i, j):
        return f"x_{t}_{i}_{j}"

    sink.write("\\ offline sponsored-listings planning LP\n")
    sink.write("Maximize\n obj: ")
    obj = [(imp.weights[i] * imp.values[j], var(t, i, j))
           for t, imp in enumerate(imps) for i in range(imp.m) for j in range(imp.n)]
    sink.write(w.expr(obj) + "\n")
    sink.write("Subject To\n")
    rows = 0
    for t, imp in enumerate(imps):
        terms = [(imp.weights[i] * imp.relevance[j], var(t, i, j)) for i in range(imp.m) for j in range(imp.n)]
        w.row(f"rel_{t}", terms, ">=", imp.target)
        rows += 1
    for t, imp in enumerate(imps):
        for j in range(imp.n):
            w.row(f"item_{t}_{j}", [(1, var(t, i, j)) for i in range(imp.m)], "<=", 1)
            rows += 1
    for t, imp in enumerate(imps):
        for i in range(imp.m):
            w.row(f"slot_{t}_{i}", [(1, var(t, i, j)) for j in range(imp.n)], "<=", 1)
            rows += 1

    seller_terms = {k: ([], []) for k in range(len(model.sellers))}  # (count, revenue)
    consumer_terms = {g: [] for g in range(len(model.consumers))}
    for t, pi in enumerate(model.impressions):
        imp = pi.impression
        ks = model.item_sellers(imp)
        g = model.consumer_index[pi.consumer]
        for j in range(imp.n):
            k = int(ks[j])
            if k < 0:
                continue
            for i in range(imp.m):
                seller_terms[k][0].append((1, var(t, i, j)))
                seller_terms[k][1].append((imp.weights[i] * imp.values[j], var(t, i, j)))
                consumer_terms[g].append((1, var(t, i, j)))
    for k, s in enumerate(model.sellers):
        count, revenue = seller_terms[k]
        if s.inventory_limit is not None:
            w.row(f"inventory_{k}", count, "<=", s.inventory_limit)
            rows += 1
        if s.revenue_target is not None:
            w.row(f"revenue_{k}", revenue, ">=", s.revenue_target)
            rows += 1
        if s.min_consumers is not None:
            w.row(f"min_consumers_{k}", count, ">=", s.min_consumers)
            rows += 1
    for g, c in enumerate(model.consumers):
        if c.min_sellers is not None:
            w.row(f"min_sellers_{g}", consumer_terms[g], ">=", c.min_sellers)
            rows += 1

    sink.write("Bounds\n")
    nvar = 0
    for t, imp in enumerate(imps):
        for i in range(imp.m):
            for j in range(imp.n):
                sink.write(f" 0 <= {var(t, i, j)} <= 1\n")
                nvar += 1
    sink.write("End\n")
    stats = LpExportStats(nvar, rows)
    log.info("exported offline LP: %d variables, %d rows", nvar, rows)
    return stats
