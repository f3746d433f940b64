import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_impression
from slrank import (
    FEAS_TOL,
    Impression,
    brute_force_mip,
    dual_value_and_subgradient,
    evaluate,
    exact_lp,
    mixing_weight,
    primal_response,
    rank_feasible,
    rank_randomized,
)
from slrank.ranker import crossing_dual_bound, lp_optimum, top_m_indices


@pytest.mark.parametrize(
    "delta, m, expected",
    [
        ((0.5, 0.9, 0.1), 2, (1, 0)),
        ((0.7, 0.7, 0.1), 2, (0, 1)),
        ((0.3, 0.3, 0.3), 3, (0, 1, 2)),
    ],
)
def test_primal_response_examples(delta, m, expected):
    assert primal_response(delta, m).assignment == expected


def test_primal_response_rejects_m_above_n():
    with pytest.raises(ValueError):
        primal_response((1.0, 2.0), 3)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.data())
def test_partial_selection_matches_stable_sort(vals, data):
    # small integer range forces many ties across the selection boundary
    delta = np.array(vals, dtype=float)
    m = data.draw(st.integers(1, len(vals)))
    ref = np.argsort(-delta, kind="stable")[:m]
    assert top_m_indices(delta, m).tolist() == ref.tolist()


def test_two_item_feasible(two_item):
    out = rank_feasible(two_item)
    assert out.plan.assignment == (1,)
    res = evaluate(two_item, out.plan)
    assert (res.revenue, res.relevance) == (1.0, 1.0)
    assert not out.constraint_redundant
    assert out.bracket.mu_plus - out.bracket.mu_minus <= two_item.epsilon
    assert out.bracket.mu_minus <= 10.0 <= out.bracket.mu_plus


def test_two_item_redundant(two_item):
    out = rank_feasible(two_item.with_lambda(0.05))
    assert out.constraint_redundant
    assert out.plan.assignment == (0,)
    assert out.plan.provenance == "redundant"
    assert evaluate(two_item, out.plan).revenue == 10.0


def test_lambda_zero_is_revenue_sorted():
    rng = np.random.default_rng(3)
    imp = random_impression(rng, 5, 20, 0.0)
    out = rank_feasible(imp)
    assert out.constraint_redundant
    assert out.plan.assignment == primal_response(imp.values, 5).assignment


def test_mixing_weight_two_item(two_item):
    out = rank_feasible(two_item)
    assert out.bracket.alpha == pytest.approx(5 / 9, abs=1e-12)
    assert mixing_weight(0.5, 0.1, 0.5) == 0.0  # Rel(X+) exactly on the floor
    assert mixing_weight(0.5, 0.5, 0.4) == 0.0  # degenerate denominator


def test_randomized_two_item_means(two_item):
    draws = 20000
    revs = np.empty(draws)
    rels = np.empty(draws)
    for s in range(draws):
        res = evaluate(two_item, rank_randomized(two_item, s).plan)
        revs[s], rels[s] = res.revenue, res.relevance
    se_rev = revs.std(ddof=1) / math.sqrt(draws)
    se_rel = rels.std(ddof=1) / math.sqrt(draws)
    assert abs(revs.mean() - 6.0) <= 3 * se_rev
    assert abs(rels.mean() - 0.5) <= 3 * se_rel


def test_randomized_redundant_equals_feasible(two_item):
    imp = two_item.with_lambda(0.05)
    assert rank_randomized(imp, 11).plan == rank_feasible(imp).plan


def test_randomized_exact_floor_returns_plus():
    # X(mu) jumps straight onto the floor: alpha = 0, so X+ is always drawn
    imp = Impression.from_arrays([1.0], [0.2, 0.6], [2.0, 1.0], 1.0)
    out = rank_feasible(imp)
    assert out.bracket.alpha == 0.0
    branches = {rank_randomized(imp, s).branch for s in range(200)}
    assert branches == {"plus"}


def test_randomized_is_seed_deterministic():
    rng = np.random.default_rng(1)
    imp = random_impression(rng, 4, 30, 0.95)
    for s in range(20):
        assert rank_randomized(imp, s).plan == rank_randomized(imp, s).plan
        assert rank_randomized(imp, s).branch == rank_randomized(imp, s).branch


def test_dual_value_examples(two_item):
    d0, g0, x0 = dual_value_and_subgradient(two_item, 0.0)
    assert x0.assignment == (0,) and g0 == pytest.approx(-0.4)
    assert d0 == pytest.approx(10.0)
    d20, g20, x20 = dual_value_and_subgradient(two_item, 20.0)
    assert x20.assignment == (1,) and g20 == pytest.approx(0.5)
    assert d20 == pytest.approx(1.0 + 20 * 0.5)
    d10, g10, x10 = dual_value_and_subgradient(two_item, 10.0)
    assert x10.assignment == (0,) and g10 == pytest.approx(-0.4)
    assert d10 == pytest.approx(6.0)
    with pytest.raises(ValueError):
        dual_value_and_subgradient(two_item, -1.0)


def _instances(count, seed, m_max=3, n_max=8, lams=(0.3, 0.7, 0.95, 1.0)):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, min(m_max, n) + 1))
        yield random_impression(rng, m, n, float(rng.choice(lams)))


def test_feasibility_and_bracketing():
    for imp in _instances(400, 10, m_max=6, n_max=30):
        out = rank_feasible(imp)
        assert evaluate(imp, out.plan).relevance >= imp.target - FEAS_TOL
        if out.constraint_redundant:
            continue
        b = out.bracket
        assert b.rel_minus < imp.target - FEAS_TOL <= b.rel_plus
        assert b.rev_minus >= b.rev_plus - 1e-12
        assert 0.0 <= b.alpha <= 1.0


def test_sandwich_on_small_instances():
    for imp in _instances(300, 11):
        out = rank_feasible(imp)
        rev = evaluate(imp, out.plan).revenue
        _, opt_mip = brute_force_mip(imp)
        lp = exact_lp(imp).objective
        assert rev <= opt_mip + 1e-9 <= lp + 2e-9
        if not out.constraint_redundant:
            b = out.bracket
            loose = b.rev_minus + b.mu_plus * (imp.target - b.rel_minus)
            assert lp <= crossing_dual_bound(imp, b) + 1e-9 <= loose + 2e-9
            assert lp_optimum(imp, b) == pytest.approx(lp, rel=1e-9, abs=1e-12)


def test_revenue_monotone_in_lambda():
    rng = np.random.default_rng(12)
    for _ in range(100):
        imp = random_impression(rng, 4, 25, 0.0)
        revs = [evaluate(imp, rank_feasible(imp.with_lambda(l)).plan).revenue
                for l in np.linspace(0, 1, 11)]
        assert all(a >= b - 1e-9 for a, b in zip(revs, revs[1:]))


def test_iteration_bound():
    for imp in _instances(200, 13, m_max=10, n_max=100):
        out = rank_feasible(imp)
        if out.constraint_redundant:
            assert out.iterations == 0
            continue
        mu_found = 2.0 ** out.doublings
        assert out.iterations <= math.ceil(math.log2(mu_found / imp.epsilon)) + 1


def test_lambda_one_attains_full_relevance():
    for imp in _instances(100, 14, lams=(1.0,)):
        res = evaluate(imp, rank_feasible(imp).plan)
        assert res.relevance >= imp.max_relevance - FEAS_TOL


def test_zero_relevance_everywhere():
    imp = Impression.from_arrays([1.0, 0.5], [0.0, 0.0, 0.0], [1.0, 3.0, 2.0], 1.0)
    out = rank_feasible(imp)
    assert out.constraint_redundant and out.plan.assignment == (1, 2)


def test_large_instance_is_feasible():
    rng = np.random.default_rng(15)
    imp = random_impression(rng, 500, 500, 0.95)
    out = rank_feasible(imp)
    assert evaluate(imp, out.plan).relevance >= imp.target - FEAS_TOL
