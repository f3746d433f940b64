"""Revenue given up for relevance on synthetic impressions.

Draws h, r, v uniformly, sweeps the relevance floor and reports the revenue
kept, the share of impressions where the floor is already met by the
revenue-sorted ranking, and the optimality gap against the LP bound.
"""

import numpy as np

from slrank import evaluate, rank_feasible
from slrank.harness import generate_instance, lp_upper_bound, trial_seed

m, n, trials = 20, 200, 100
lambdas = [0.0, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0]

base = [generate_instance(m, n, 0.0, trial_seed(0, t)) for t in range(trials)]
top_revenue = np.array([evaluate(imp, rank_feasible(imp).plan).revenue for imp in base])

print(f"{'lambda':>7} {'revenue kept':>13} {'redundant':>10} {'gap %':>8}")
for lam in lambdas:
    kept, red, gaps = [], [], []
    for imp, r0 in zip(base, top_revenue):
        imp = imp.with_lambda(lam)
        out = rank_feasible(imp)
        rev = evaluate(imp, out.plan).revenue
        ub, _ = lp_upper_bound(imp, out)
        kept.append(rev / r0)
        red.append(out.constraint_redundant)
        gaps.append(100 * (ub - rev) / ub if ub > 0 else 0.0)
    print(f"{lam:7.2f} {np.mean(kept):13.4f} {np.mean(red):10.2f} {np.mean(gaps):8.4f}")
