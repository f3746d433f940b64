"""One slot, two candidates: where the revenue/relevance trade-off becomes visible.

Item 0 earns 10 but is barely relevant (0.1); item 1 earns 1 and is fully
relevant. Requiring half of the best relevance forces a choice, and the LP
relaxation splits the slot 5/9 : 4/9 between them.
"""

import numpy as np

from slrank import Impression, evaluate, exact_lp, rank_feasible, rank_randomized
from slrank.ranker import dual_value_and_subgradient

imp = Impression.from_arrays(h=[1.0], r=[0.1, 1.0], v=[10.0, 1.0], lam=0.5, epsilon=1e-6)
print(f"max relevance a = {imp.max_relevance}, floor lam*a = {imp.target}")

# The dual is piecewise linear with a kink where the two adjusted scores tie.
for mu in (0.0, 5.0, 10.0, 15.0, 20.0):
    d, g, plan = dual_value_and_subgradient(imp, mu)
    print(f"  mu={mu:5.1f}  D={d:6.2f}  subgradient={g:+.2f}  response={plan.assignment}")

out = rank_feasible(imp)
b = out.bracket
print(f"\nbisection: mu in [{b.mu_minus:.6f}, {b.mu_plus:.6f}] after {out.doublings} doublings "
      f"and {out.iterations} halvings")
print(f"feasible plan {out.plan.assignment}: {evaluate(imp, out.plan)}")

lp = exact_lp(imp)
print(f"\nexact LP: case {lp.case_tag}, mu* = {lp.mu_star}, objective {lp.objective:.4f}")
print(f"  entries {lp.entries}")

# The randomized ranker returns item 0 with probability alpha = 5/9.
seeds = np.arange(20000)
revs = np.array([evaluate(imp, rank_randomized(imp, int(s)).plan).revenue for s in seeds])
print(f"\nrandomized: alpha = {b.alpha:.4f}, mean revenue over {seeds.size} seeds = {revs.mean():.4f} "
      f"(LP optimum {lp.objective:.1f})")
