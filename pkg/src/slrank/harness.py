"""Synthetic benchmarks, lambda tuning, and the Monte-Carlo check of the randomized ranker."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .core import Impression, RankingPlan, evaluate
from .oracles import LP_MAX_N, breakpoints, exact_lp
from .ranker import RankOutcome, choose_branch, lp_optimum, rank_feasible

CSV_COLUMNS = (
    "m", "n", "lambda", "trials", "mean_gap_pct", "mean_time_us",
    "p50_time_us", "p99_time_us", "redundancy_rate", "seed",
)


def trial_seed(seed: int, trial: int) -> int:
    """Independent per-trial seed derived from the run seed and trial index."""
    return int(np.random.SeedSequence((seed, trial)).generate_state(1, dtype=np.uint64)[0])


def generate_instance(m: int, n: int, lam: float, seed: int, epsilon: float = 1e-4) -> Impression:
    """h, r, v drawn i.i.d. U(0,1); h sorted descending."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    h = np.sort(rng.random(m))[::-1]
    r = rng.random(n)
    v = rng.random(n)
    return Impression.from_arrays(h, r, v, lam, epsilon)


def lp_upper_bound(imp: Impression, outcome: RankOutcome, max_exact_n: int = LP_MAX_N):
    """Upper bound on the LP relaxation optimum and its source.

    Redundant instances are solved exactly by the ranker itself. Otherwise the
    closed-form LP oracle is used up to ``max_exact_n`` items, and beyond that
    the LP optimum is found by cutting planes on the dual. Both give the LP
    optimum exactly.
    """
    if outcome.constraint_redundant:
        return evaluate(imp, outcome.plan).revenue, "redundant"
    if imp.n <= max_exact_n:
        return exact_lp(imp).objective, "exact_lp"
    return lp_optimum(imp, outcome.bracket), "lp_dual"


@dataclass(frozen=True)
class BenchRecord:
    m: int
    n: int
    lam: float
    trials: int
    mean_gap_pct: float
    mean_time_us: float
    p50_time_us: float
    p99_time_us: float
    redundancy_rate: float
    seed: int
    bound_source: str = ""
    gaps_pct: tuple = field(default=(), repr=False)
    redundant: tuple = field(default=(), repr=False)
    revenues: tuple = field(default=(), repr=False)

    def csv_row(self, timing: bool = True) -> list:
        t = (self.mean_time_us, self.p50_time_us, self.p99_time_us) if timing else (0.0, 0.0, 0.0)
        return [
            self.m, self.n, f"{self.lam:.6g}", self.trials, f"{self.mean_gap_pct:.6f}",
            f"{t[0]:.1f}", f"{t[1]:.1f}", f"{t[2]:.1f}", f"{self.redundancy_rate:.4f}", self.seed,
        ]


def run_cell(m: int, n: int, lam: float, trials: int, seed: int, epsilon: float = 1e-4) -> BenchRecord:
    """One (m, n, lambda) cell: ``trials`` instances, ranker timed alone."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gaps, times, red, revs, sources = [], [], [], [], set()
    for t in range(trials):
        imp = generate_instance(m, n, lam, trial_seed(seed, t), epsilon)
        t0 = time.perf_counter_ns()
        out = rank_feasible(imp)
        times.append((time.perf_counter_ns() - t0) / 1e3)
        rev = evaluate(imp, out.plan).revenue
        ub, src = lp_upper_bound(imp, out)
        sources.add(src)
        gaps.append(0.0 if ub == rev else 100.0 * (ub - rev) / ub)
        red.append(out.constraint_redundant)
        revs.append(rev)
    times_a = np.array(times)
    return BenchRecord(
        m, n, float(lam), trials,
        float(np.mean(gaps)), float(times_a.mean()),
        float(np.percentile(times_a, 50)), float(np.percentile(times_a, 99)),
        float(np.mean(red)), seed, "+".join(sorted(sources)),
        tuple(gaps), tuple(red), tuple(revs),
    )


def run_lambda_sweep(m: int, n: int, lambdas: Iterable[float], trials: int, seed: int) -> list:
    """One record per lambda, in the given order, on a shared instance stream."""
    return [run_cell(m, n, lam, trials, seed) for lam in lambdas]


def run_size_sweep(sizes: Iterable, lam: float, trials: int, seed: int) -> list:
    return [run_cell(m, n, lam, trials, seed) for m, n in sizes]


def write_csv(records: Sequence[BenchRecord], sink: TextIO, timing: bool = True) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row(timing))


# --- lambda tuning --------------------------------------------------------------


@dataclass(frozen=True)
class TuneReport:
    samples: int
    skipped: int  # impressions with zero maximal relevance
    mean: float
    median: float
    quantiles: dict
    statistic: str
    lambda0: float
    grid: tuple


def tune_lambda(
    history: Sequence,
    statistic: Union[str, float] = "mean",
    delta: float = 0.025,
    steps: int = 2,
) -> TuneReport:
    """Starting lambda from the relevance ratios realised by historical rankings.

    ``statistic`` is "mean", "median" or a quantile level in [0, 1]. The grid is
    lambda0 +/- k*delta for k <= steps, clipped to [0, 1].
    """
    if not history:
        raise ValueError("history is empty")
    ratios, skipped = [], 0
    for imp, plan in history:
        res = evaluate(imp, plan)
        if res.relevance_ratio is None:
            skipped += 1
            continue
        ratios.append(min(1.0, max(0.0, res.relevance_ratio)))
    if not ratios:
        raise ValueError("no impression with positive maximal relevance")
    arr = np.array(ratios)
    qs = {q: float(np.quantile(arr, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)}
    if statistic == "mean":
        lam0, label = float(arr.mean()), "mean"
    elif statistic == "median":
        lam0, label = float(np.median(arr)), "median"
    else:
        q = float(statistic)
        if not 0.0 <= q <= 1.0:
            raise ValueError("quantile level must lie in [0, 1]")
        lam0, label = float(np.quantile(arr, q)), f"quantile {q:g}"
    grid = sorted({min(1.0, max(0.0, round(lam0 + k * delta, 12))) for k in range(-steps, steps + 1)})
    return TuneReport(len(ratios), skipped, float(arr.mean()), float(np.median(arr)), qs, label, lam0, tuple(grid))


# --- Monte-Carlo check of the randomized ranker ---------------------------------------


@dataclass(frozen=True)
class InstanceCheck:
    draws: int
    lp_objective: float
    target: float
    mean_revenue: float
    revenue_se: float
    mean_relevance: float
    relevance_se: float
    fractional_z: tuple  # |deviation| / SE on cells where the LP solution is fractional
    integral_max_dev: float  # max |deviation| on cells where the LP solution is 0 or 1
    exact_mean_error: float  # max |E[X] - X_LP| computed analytically
    case_tag: str
    redundant: bool

    @property
    def revenue_z(self) -> float:
        return _z(self.mean_revenue - self.lp_objective, self.revenue_se)

    @property
    def relevance_z(self) -> float:
        return _z(self.mean_relevance - self.target, self.relevance_se)


def _z(dev: float, se: float) -> float:
    if se > 0:
        return abs(dev) / se
    return 0.0 if abs(dev) <= 1e-12 else math.inf


def check_instance(imp: Impression, draws: int, rng: np.random.Generator) -> InstanceCheck:
    """Sample the randomized ranker ``draws`` times and compare with the exact LP.

    The bisection is deterministic, so it runs once; only the final uniform
    draw is repeated, with the same branch rule as ``rank_randomized``.
    Standard errors are those of the exact LP mixture.
    """
    lp = exact_lp(imp)
    out = rank_feasible(imp)
    m, n = imp.m, imp.n
    x_lp = lp.as_matrix(m, n)
    if out.constraint_redundant:
        x = out.plan.as_matrix(n)
        rev = evaluate(imp, out.plan)
        dev = float(np.abs(x - x_lp).max())
        return InstanceCheck(
            draws, lp.objective, imp.target, rev.revenue, 0.0, rev.relevance, 0.0,
            (), dev, dev, lp.case_tag, True,
        )
    br = out.bracket
    us = rng.random(draws)
    plus = np.array([choose_branch(br, u) == "plus" for u in us])
    frac_plus = plus.mean()
    xp, xm = br.plan_plus.as_matrix(n), br.plan_minus.as_matrix(n)
    mean_x = frac_plus * xp + (1 - frac_plus) * xm
    mean_rev = frac_plus * br.rev_plus + (1 - frac_plus) * br.rev_minus
    mean_rel = frac_plus * br.rel_plus + (1 - frac_plus) * br.rel_minus
    a = br.alpha
    bern_se = math.sqrt(a * (1 - a) / draws)
    frac = (x_lp > 1e-12) & (x_lp < 1 - 1e-12)
    dev = mean_x - x_lp
    cell_se = np.sqrt(x_lp[frac] * (1 - x_lp[frac]) / draws)
    zs = tuple(_z(d, s) for d, s in zip(dev[frac], cell_se))
    integral_dev = float(np.abs(dev[~frac]).max()) if (~frac).any() else 0.0
    expected = (1 - a) * xp + a * xm
    return InstanceCheck(
        draws, lp.objective, imp.target,
        float(mean_rev), abs(br.rev_minus - br.rev_plus) * bern_se,
        float(mean_rel), abs(br.rel_plus - br.rel_minus) * bern_se,
        zs, integral_dev, float(np.abs(expected - x_lp).max()), lp.case_tag, False,
    )


@dataclass(frozen=True)
class Theorem1Report:
    checks: tuple
    skipped_degenerate: int
    skipped_redundant: int
    pooled_revenue_z: float
    pooled_relevance_z: float
    cell_within_3se: float  # fraction of fractional-cell means within 3 SE
    integral_max_dev: float  # worst deviation on integral cells (expected 0)
    instance_revenue_within_3se: float
    instance_relevance_within_3se: float
    max_exact_mean_error: float


def verify_theorem1(
    m: int, n: int, lam: float, instances: int, draws: int, seed: int,
    require_binding: bool = True,
) -> Theorem1Report:
    """Monte-Carlo check that the randomized ranker reproduces the LP optimum on average.

    Instances are drawn from the synthetic generator; redundant ones (when
    ``require_binding``) and degenerate ones are skipped and counted. Each
    accepted instance gets a bisection tolerance of min(1e-4, gap/2), where gap
    is the smallest spacing between indifference values of any item pair.

    Cell statistics cover cells where the LP solution is fractional; integral
    cells are compared exactly.
    """
    if draws < 1000:
        raise ValueError("draws must be >= 1000")
    rng = np.random.default_rng(seed)
    checks, skip_deg, skip_red = [], 0, 0
    t = 0
    while len(checks) < instances:
        imp = generate_instance(m, n, lam, trial_seed(seed, t))
        t += 1
        bps = breakpoints(imp, scope="all")
        if bps.degenerate:
            skip_deg += 1
            continue
        eps = min(1e-4, bps.delta_min / 2) if math.isfinite(bps.delta_min) else 1e-4
        imp = imp.with_lambda(lam, eps)
        chk = check_instance(imp, draws, rng)
        if chk.redundant and require_binding:
            skip_red += 1
            continue
        checks.append(chk)
    return summarize_checks(checks, skip_deg, skip_red)


def summarize_checks(checks: Sequence[InstanceCheck], skip_deg: int = 0, skip_red: int = 0) -> Theorem1Report:
    rev_dev = sum(c.mean_revenue - c.lp_objective for c in checks)
    rev_se = math.sqrt(sum(c.revenue_se ** 2 for c in checks))
    rel_dev = sum(c.mean_relevance - c.target for c in checks)
    rel_se = math.sqrt(sum(c.relevance_se ** 2 for c in checks))
    zs = [z for c in checks for z in c.fractional_z]
    ok = sum(z <= 3.0 for z in zs)
    return Theorem1Report(
        tuple(checks), skip_deg, skip_red,
        _z(rev_dev, rev_se), _z(rel_dev, rel_se),
        ok / len(zs) if zs else 1.0,
        max((c.integral_max_dev for c in checks), default=0.0),
        float(np.mean([c.revenue_z <= 3.0 for c in checks])) if checks else 1.0,
        float(np.mean([c.relevance_z <= 3.0 for c in checks])) if checks else 1.0,
        max((c.exact_mean_error for c in checks), default=0.0),
    )
