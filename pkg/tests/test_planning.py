import io
import itertools
import math

import numpy as np
import pytest

from conftest import random_impression
from lp_oracle import parse_lp, solve_lp_text
from slrank import FEAS_TOL, Impression, Item, RankingPlan, build_impression, evaluate, rank_feasible
from slrank.planning import (
    AscentConfig,
    Consumer,
    Duals,
    GlobalPlanModel,
    PlannedImpression,
    Seller,
    adjust_coefficients,
    dp_assign,
    estimate_duals,
    expected_dimensions,
    export_offline_lp,
    rank_with_coefficients,
    rank_with_duals,
    usage,
    violations,
)


def enumerate_plans(m, n):
    for assign in itertools.product(list(range(n)) + [None], repeat=m):
        used = [j for j in assign if j is not None]
        if len(used) == len(set(used)):
            yield assign


def modified_value(h, a, b, assign):
    return sum(h[i] * a[j] + b[j] for i, j in enumerate(assign) if j is not None)


def subset_optimum(h, a, b, m):
    """Best value over subsets of size <= m, each ordered by descending a (sign-aware)."""
    n = len(a)
    best = 0.0
    for k in range(1, m + 1):
        for sub in itertools.combinations(range(n), k):
            for slots in itertools.combinations(range(m), k):
                # for fixed slots, pair by rearrangement: larger a on larger h
                order = sorted(sub, key=lambda j: -a[j])
                val = sum(h[s] * a[j] + b[j] for s, j in zip(slots, order))
                best = max(best, val)
    return best


def test_dp_assign_example():
    plan = dp_assign([1.0, 0.5], [3, 2, 1], [0, 0, 5], 2)
    assert plan.assignment == (0, 2)
    assert modified_value([1.0, 0.5], [3, 2, 1], [0, 0, 5], plan.assignment) == pytest.approx(8.5)


def test_dp_assign_reduces_to_primal_response():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.random(9)
        plan = dp_assign(np.sort(rng.random(4))[::-1], a, np.zeros(9), 4)
        assert plan.assignment == tuple(np.argsort(-a, kind="stable")[:4])


def test_dp_assign_full_slots():
    a = [0.3, 2.0, 1.0]
    assert dp_assign([3.0, 2.0, 1.0], a, [0.5, 0.5, 0.5], 3).assignment == (1, 2, 0)


def test_dp_assign_matches_enumeration_mixed_signs():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, min(3, n) + 1))
        h = np.sort(rng.random(m))[::-1]
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        plan = dp_assign(h, a, b, m)
        got = modified_value(h, a, b, plan.assignment)
        best = max(modified_value(h, a, b, x) for x in enumerate_plans(m, n))
        assert got == pytest.approx(best, abs=1e-12)


def test_dp_assign_rejects_bad_sizes():
    with pytest.raises(ValueError):
        dp_assign([1.0, 0.5, 0.2], [1, 2], [0, 0], 3)


def _model(imps, sellers, consumers, duals=None):
    return GlobalPlanModel(
        tuple(PlannedImpression(imp, c) for imp, c in imps), tuple(sellers), tuple(consumers), duals
    )


def _seller_impression(rows, weights, lam, prefix="i"):
    items = [Item.synthetic(f"{prefix}{j}", r, v, s) for j, (r, v, s) in enumerate(rows)]
    return build_impression(weights, items, lam)


def test_adjust_coefficients_examples():
    imp = _seller_impression([(0.5, 5.0, "s"), (0.5, 10.0, "s"), (0.5, 1.0, None)], [1.0], 0.0)
    model = _model([(imp, "c")], [Seller("s")], [Consumer("c")])
    coef = adjust_coefficients(imp, model, "c")
    assert coef.a_coef.tolist() == [5.0, 10.0, 1.0] and not coef.b_coef.any()

    model = model.with_duals(Duals((2.0,), (0.1,), (0.0,), (0.0,)))
    coef = adjust_coefficients(imp, model, "c")
    assert coef.a_coef.tolist() == pytest.approx([5.5, 11.0, 1.0])
    assert coef.b_coef.tolist() == pytest.approx([-2.0, -2.0, 0.0])

    model = model.with_duals(Duals((0.5,), (0.0,), (0.25,), (1.0,)))
    assert adjust_coefficients(imp, model, "c").b_coef.tolist() == pytest.approx([0.75, 0.75, 0.0])
    with pytest.raises(KeyError):
        adjust_coefficients(imp, model, "nobody")


def test_model_validation():
    imp = _seller_impression([(0.5, 1.0, "ghost")], [1.0], 0.0)
    with pytest.raises(ValueError):
        _model([(imp, "c")], [Seller("s")], [Consumer("c")])
    imp = _seller_impression([(0.5, 1.0, "s")], [1.0], 0.0)
    with pytest.raises(ValueError):
        _model([(imp, "c")], [Seller("s", inventory_limit=-1)], [Consumer("c")])
    with pytest.raises(ValueError):
        _model([(imp, "c")], [Seller("s")], [Consumer("c")], Duals((-1.0,), (0.0,), (0.0,), (0.0,)))


def test_zero_duals_identical_to_rank_feasible():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(1, min(8, n) + 1))
        imp = random_impression(rng, m, n, float(rng.choice([0.0, 0.5, 0.9, 0.99, 1.0])))
        model = _model([(imp, "c")], [], [Consumer("c")])
        assert rank_with_duals(imp, model, "c").plan.assignment == rank_feasible(imp).plan.assignment


def test_penalised_two_item():
    imp = _seller_impression([(0.1, 10.0, None), (1.0, 1.0, "s")], [1.0], 0.5)
    model = _model([(imp, "c")], [Seller("s")], [Consumer("c")], Duals((100.0,), (0.0,), (0.0,), (0.0,)))
    out = rank_with_duals(imp, model, "c")
    # item1 is the only relevance-feasible choice even under the penalty
    assert out.plan.assignment == (1,)


def test_rank_with_coefficients_against_enumeration():
    rng = np.random.default_rng(3)
    exact = 0
    for _ in range(300):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, min(3, n) + 1))
        imp = random_impression(rng, m, n, float(rng.choice([0.5, 0.8, 0.95])))
        a = imp.values * (1 + rng.random(n) * rng.integers(0, 2))
        b = rng.normal(scale=0.3, size=n)
        out = rank_with_coefficients(imp, a, b)
        h, r = imp.weights, imp.relevance
        feas = [x for x in enumerate_plans(m, n)
                if sum(h[i] * r[j] for i, j in enumerate(x) if j is not None) >= imp.target - FEAS_TOL]
        best = max(modified_value(h, a, b, x) for x in feas)
        got = modified_value(h, a, b, out.plan.assignment)
        assert out.plan.assignment in feas
        assert got <= best + 1e-9 <= out.dual_bound + 2e-9
        if out.constraint_redundant or out.bracket.alpha == 0.0:
            exact += 1
            assert got == pytest.approx(best, abs=1e-9)
    assert exact > 20


def joint_optimum(model):
    """Exhaustive search over joint plans under every relevance floor and global bound."""
    per_imp = []
    for pi in model.impressions:
        imp = pi.impression
        ok = []
        for x in enumerate_plans(imp.m, imp.n):
            plan = RankingPlan(x)
            if evaluate(imp, plan).relevance >= imp.target - FEAS_TOL:
                ok.append(plan)
        per_imp.append(ok)
    best, best_plans = -math.inf, None
    for plans in itertools.product(*per_imp):
        if any(v > 1e-9 for v in violations(model, plans).values()):
            continue
        total = usage(model, plans).total_revenue
        if total > best:
            best, best_plans = total, plans
    return best, best_plans


def _displayed(model, plans):
    return sorted(
        (t, model.impressions[t].impression.items[j].id)
        for t, plan in enumerate(plans) for _, j in plan.filled()
    )


def inventory_example():
    imp1 = _seller_impression([(0.5, 5.0, "s"), (0.5, 1.0, None)], [1.0], 0.5, "a")
    imp2 = _seller_impression([(0.5, 3.0, "s"), (0.5, 1.0, None)], [1.0], 0.5, "b")
    return _model([(imp1, "c"), (imp2, "c")], [Seller("s", inventory_limit=1)], [Consumer("c")])


def test_inventory_example_converges_to_joint_optimum():
    model = inventory_example()
    best, plans = joint_optimum(model)
    assert best == pytest.approx(6.0)
    est = estimate_duals(model, AscentConfig(step=1.0, iterations=200))
    assert est.model.duals.xi[0] > 0
    assert _displayed(model, est.plans) == _displayed(model, plans)
    assert all(v == 0 for v in est.violations.values())
    assert est.primal_value == pytest.approx(best)
    assert est.dual_bound >= best - 1e-9


def test_slack_constraints_keep_zero_duals():
    rng = np.random.default_rng(4)
    imps = []
    for t in range(3):
        base = random_impression(rng, 2, 5, 0.8)
        items = [Item.synthetic(f"t{t}_{j}", base.relevance[j], base.values[j], "s" if j % 2 else None)
                 for j in range(5)]
        imps.append((build_impression(base.weights, items, 0.8), "c"))
    model = _model(imps, [Seller("s", 1e6, 0.0, 0.0)], [Consumer("c", 0.0)])
    est = estimate_duals(model, AscentConfig(iterations=30))
    assert not est.model.duals.vector().any()
    for pi, plan in zip(model.impressions, est.plans):
        assert plan.assignment == rank_feasible(pi.impression).plan.assignment


def _random_model(rng, T=2, n=3, m=1):
    imps = []
    for t in range(T):
        base = random_impression(rng, m, n, float(rng.choice([0.3, 0.7])))
        items = [Item.synthetic(f"t{t}_{j}", base.relevance[j], base.values[j],
                                ["s0", "s1", None][int(rng.integers(0, 3))]) for j in range(n)]
        imps.append((build_impression(base.weights, items, base.lam), ["c0", "c1"][t % 2]))
    sellers = [Seller("s0", inventory_limit=float(rng.integers(1, 3)), revenue_target=float(rng.random() * 0.1)),
               Seller("s1", min_consumers=float(rng.integers(0, 2)))]
    consumers = [Consumer("c0", min_sellers=float(rng.integers(0, 2))), Consumer("c1")]
    return _model(imps, sellers, consumers)


def test_dual_history_and_bound_against_lp():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(25):
        model = _random_model(rng)
        buf = io.StringIO()
        export_offline_lp(model, buf)
        lp = solve_lp_text(buf.getvalue())
        est = estimate_duals(model, AscentConfig(step=0.5, iterations=150))
        assert all(x >= y - 1e-12 for x, y in zip(est.history, est.history[1:]))
        if lp is None:
            continue  # offline LP infeasible: the dual bound may be anything
        checked += 1
        lp_val, _ = lp
        assert est.dual_bound >= lp_val - 1e-7
        best, plans = joint_optimum(model)
        if plans is not None and not any(est.violations.values()):
            # feasible induced plans cannot beat the joint optimum
            assert est.primal_value <= best + 1e-9
            assert est.gap is not None and est.gap >= -1e-9
    assert checked > 10


def test_export_dimensions_small():
    imp = Impression.from_arrays([1.0], [0.1, 1.0], [10.0, 1.0], 0.5)
    model = _model([(imp, "c")], [], [Consumer("c")])
    buf = io.StringIO()
    stats = export_offline_lp(model, buf)
    assert (stats.variables, stats.rows) == (2, 4)
    assert stats == expected_dimensions(model)

    imp2 = _seller_impression([(0.1, 10.0, "s"), (1.0, 1.0, None)], [1.0], 0.5)
    model2 = _model([(imp2, "c")], [Seller("s", inventory_limit=1, revenue_target=0.5)], [Consumer("c")])
    stats2 = export_offline_lp(model2, io.StringIO())
    assert stats2.rows == stats.rows + 2


def test_export_dimensions_symbolic():
    rng = np.random.default_rng(6)
    for _ in range(20):
        T = int(rng.integers(1, 5))
        imps, nm = [], 0
        for t in range(T):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, n + 1))
            base = random_impression(rng, m, n, 0.5)
            items = [Item.synthetic(f"{t}_{j}", base.relevance[j], base.values[j], f"s{j % 2}") for j in range(n)]
            imps.append((build_impression(base.weights, items, 0.5), "c0"))
            nm += m + n
        sellers = [Seller("s0", 3, 1.0, 1), Seller("s1", 2, 0.5, 0)]
        model = _model(imps, sellers, [Consumer("c0", 1)])
        buf = io.StringIO()
        stats = export_offline_lp(model, buf)
        K, G = 2, 1
        assert stats.rows == T + nm + 2 * K + K + G
        assert stats.variables == sum(pi.impression.m * pi.impression.n for pi in model.impressions)
        _, obj, rows, bounds = parse_lp(buf.getvalue())
        assert len(rows) == stats.rows and len(bounds) == stats.variables


def test_exported_lp_single_impression_matches_exact_lp():
    from slrank import exact_lp

    rng = np.random.default_rng(7)
    for _ in range(20):
        imp = random_impression(rng, 2, 5, 0.9)
        model = _model([(imp, "c")], [], [Consumer("c")])
        buf = io.StringIO()
        export_offline_lp(model, buf)
        val, _ = solve_lp_text(buf.getvalue())
        assert val == pytest.approx(exact_lp(imp).objective, rel=1e-7)


def test_exported_lp_is_written_deterministically():
    model = inventory_example()
    a, b = io.StringIO(), io.StringIO()
    export_offline_lp(model, a)
    export_offline_lp(model, b)
    assert a.getvalue() == b.getvalue()
    assert a.getvalue().startswith("\\") and a.getvalue().rstrip().endswith("End")
