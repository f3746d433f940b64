"""Coupling impressions through a seller's inventory.

Two visits both want the same seller's item, which can be shown only once.
Dual prices on the inventory row are estimated by projected subgradient
steps; once the price sits between the two visits' surplus for the item, the
per-visit rankings agree with the joint optimum. The offline LP is also
written out in CPLEX LP format for an external solver.
"""

import io

from slrank import Item, build_impression
from slrank.planning import (
    AscentConfig,
    Consumer,
    GlobalPlanModel,
    PlannedImpression,
    Seller,
    estimate_duals,
    export_offline_lp,
)


def visit(prefix, value_of_x):
    items = [Item.synthetic(f"{prefix}-x", 0.5, value_of_x, seller="acme"),
             Item.synthetic(f"{prefix}-y", 0.5, 1.0)]
    return build_impression([1.0], items, lam=0.5)


model = GlobalPlanModel(
    impressions=(PlannedImpression(visit("v1", 5.0), "alice"), PlannedImpression(visit("v2", 3.0), "bob")),
    sellers=(Seller("acme", inventory_limit=1),),
    consumers=(Consumer("alice"), Consumer("bob")),
)

est = estimate_duals(model, AscentConfig(step=1.0, iterations=100))
print(f"inventory price xi = {est.model.duals.xi[0]:.3f} after {est.iterations} iterations")
print(f"dual bound {est.dual_bound:.4f}, induced revenue {est.primal_value:.4f}, gap {est.gap}")
for pi, plan in zip(model.impressions, est.plans):
    print(f"  {pi.consumer}: {pi.impression.to_caller_order(plan)}")
print(f"violations: {est.violations}")

buf = io.StringIO()
stats = export_offline_lp(model, buf)
print(f"\noffline LP: {stats.variables} variables, {stats.rows} rows")
print(buf.getvalue())
