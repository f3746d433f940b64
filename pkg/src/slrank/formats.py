"""JSON document formats for impressions, plans, planning models and histories.

Impression document::

    {
      "position_weights": [0.6, 0.4],
      "items": [
        {"id": "a", "ptr": 0.1, "price": 20.0, "take_rate": 0.1, "ad_rate": 0.05},
        {"id": "b", "r": 0.3, "v": 1.2}
      ],
      "lambda": 0.9,
      "epsilon": 0.0001
    }

Items carry either the rate decomposition (``ptr``, ``price``, ``take_rate``,
``ad_rate``) or a direct relevance/value pair (``r``, ``v``). Planning items
may add ``"seller": "<seller id>"``. ``epsilon`` is optional (default 1e-4).

Planning model document::

    {
      "sellers": [{"id": "s1", "inventory_limit": 5, "revenue_target": 2.0,
                   "min_consumers": 1}],
      "consumers": [{"id": "c1", "min_sellers": 1}],
      "impressions": [{"consumer": "c1", <impression fields>}],
      "duals": {"xi": [0.0], "nu": [0.0], "eta": [0.0], "theta": [0.0]}
    }

Seller and consumer bounds are optional; a missing bound drops the
constraint. ``duals`` is optional (zeros).

History document (input to lambda tuning)::

    {"history": [{"impression": {...}, "plan": ["a", "b"]}, ...]}

Plans list item ids in the caller's slot order; ``null`` marks an empty slot.
"""

from __future__ import annotations

import json
import math
from typing import Any, Optional

from .core import (
    Impression,
    InstanceFormatError,
    InstanceValidationError,
    Item,
    RankingPlan,
    build_impression,
)
from .planning import Consumer, Duals, GlobalPlanModel, PlannedImpression, Seller

DEFAULT_EPSILON = 1e-4


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from None


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise InstanceFormatError("expected an object", where or "<root>")
    if key not in doc:
        raise InstanceFormatError("missing field", f"{where}{key}")
    return doc[key]


def _list(x, where: str) -> list:
    if not isinstance(x, list):
        raise InstanceFormatError("expected an array", where)
    return x


def _item(rec, where: str) -> Item:
    if not isinstance(rec, dict):
        raise InstanceFormatError("expected an object", where)
    if "id" not in rec:
        raise InstanceFormatError("missing field", f"{where}.id")
    seller = rec.get("seller")
    if seller is not None:
        seller = str(seller)
    try:
        if all(k in rec for k in ("ptr", "price", "take_rate", "ad_rate")):
            return Item.from_rates(rec["id"], rec["ptr"], rec["price"], rec["take_rate"], rec["ad_rate"], seller)
        if "r" in rec and "v" in rec:
            return Item.synthetic(rec["id"], rec["r"], rec["v"], seller)
    except (InstanceFormatError, InstanceValidationError) as exc:
        raise type(exc)(exc.message, f"{where}.{exc.field}") from None
    raise InstanceFormatError("needs {ptr, price, take_rate, ad_rate} or {r, v}", where)


def impression_from_dict(doc: dict, where: str = "", weight_profile: Optional[list] = None) -> Impression:
    """Parse an impression document.

    When ``weight_profile`` is given, a ``"slots": k`` field may stand in for
    ``position_weights`` and selects the first k profile weights.
    """
    if not isinstance(doc, dict):
        raise InstanceFormatError("expected an object", where or "<root>")
    if "position_weights" in doc:
        weights = _list(doc["position_weights"], f"{where}position_weights")
    elif "slots" in doc and weight_profile is not None:
        k = doc["slots"]
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise InstanceFormatError("expected a positive integer", f"{where}slots")
        if k > len(weight_profile):
            raise InstanceValidationError(
                f"{k} slots requested but the weight profile has {len(weight_profile)}", f"{where}slots"
            )
        weights = list(weight_profile[:k])
    else:
        raise InstanceFormatError("missing field", f"{where}position_weights")
    raw_items = _list(_require(doc, "items", where), f"{where}items")
    items = [_item(rec, f"{where}items[{j}]") for j, rec in enumerate(raw_items)]
    lam = _require(doc, "lambda", where)
    eps = doc.get("epsilon", DEFAULT_EPSILON)
    for key, val in (("lambda", lam), ("epsilon", eps)):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise InstanceFormatError("expected a number", f"{where}{key}")
    try:
        return build_impression(weights, items, lam, eps)
    except (InstanceFormatError, InstanceValidationError) as exc:
        raise type(exc)(exc.message, f"{where}{exc.field}") from None


def impression_to_dict(imp: Impression) -> dict:
    """Inverse of :func:`impression_from_dict` (weights back in caller slot order)."""
    weights = [0.0] * imp.m
    for s, c in enumerate(imp.slot_order):
        weights[c] = float(imp.weights[s])
    items = []
    for it in imp.items:
        if it.has_rates:
            rec = {"id": it.id, "ptr": it.ptr, "price": it.price, "take_rate": it.take_rate, "ad_rate": it.ad_rate}
        else:
            rec = {"id": it.id, "r": it.ptr, "v": it.value}
        if it.seller is not None:
            rec["seller"] = it.seller
        items.append(rec)
    return {"position_weights": weights, "items": items, "lambda": imp.lam, "epsilon": imp.epsilon}


def plan_from_ids(imp: Impression, ids: list, provenance: str = "oracle", where: str = "plan") -> RankingPlan:
    """Plan from item ids listed in caller slot order."""
    ids = _list(ids, where)
    if len(ids) != imp.m:
        raise InstanceValidationError(f"has {len(ids)} entries, impression has {imp.m} slots", where)
    index = {it.id: j for j, it in enumerate(imp.items)}
    assign = [None] * imp.m
    for c, item_id in enumerate(ids):
        if item_id is None:
            continue
        if str(item_id) not in index:
            raise InstanceValidationError(f"unknown item id {item_id!r}", f"{where}[{c}]")
        assign[imp.slot_order.index(c)] = index[str(item_id)]
    try:
        return RankingPlan(tuple(assign), provenance)
    except ValueError as exc:
        raise InstanceValidationError(str(exc), where) from None


def _opt_bound(rec: dict, key: str, where: str) -> Optional[float]:
    val = rec.get(key)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise InstanceFormatError("expected a finite number", f"{where}.{key}")
    if val < 0:
        raise InstanceValidationError("must be nonnegative", f"{where}.{key}")
    return float(val)


def model_from_dict(doc: dict) -> GlobalPlanModel:
    sellers = []
    for k, rec in enumerate(_list(_require(doc, "sellers", ""), "sellers")):
        where = f"sellers[{k}]"
        sellers.append(Seller(
            str(_require(rec, "id", where + ".")),
            _opt_bound(rec, "inventory_limit", where),
            _opt_bound(rec, "revenue_target", where),
            _opt_bound(rec, "min_consumers", where),
        ))
    consumers = []
    for g, rec in enumerate(_list(_require(doc, "consumers", ""), "consumers")):
        where = f"consumers[{g}]"
        consumers.append(Consumer(str(_require(rec, "id", where + ".")), _opt_bound(rec, "min_sellers", where)))
    imps = []
    for t, rec in enumerate(_list(_require(doc, "impressions", ""), "impressions")):
        where = f"impressions[{t}]."
        imps.append(PlannedImpression(impression_from_dict(rec, where), str(_require(rec, "consumer", where))))
    duals = None
    if doc.get("duals") is not None:
        d = doc["duals"]
        try:
            duals = Duals(*(tuple(float(x) for x in _list(d.get(key, []), f"duals.{key}"))
                            for key in ("xi", "nu", "eta", "theta")))
        except (TypeError, ValueError, AttributeError):
            raise InstanceFormatError("expected arrays of numbers", "duals") from None
    try:
        return GlobalPlanModel(tuple(imps), tuple(sellers), tuple(consumers), duals)
    except ValueError as exc:
        raise InstanceValidationError(str(exc), "model") from None


def duals_to_dict(duals: Duals) -> dict:
    return {"xi": list(duals.xi), "nu": list(duals.nu), "eta": list(duals.eta), "theta": list(duals.theta)}


def model_to_dict(model: GlobalPlanModel) -> dict:
    def bounds(obj, keys):
        return {k: getattr(obj, k) for k in keys if getattr(obj, k) is not None}

    return {
        "sellers": [{"id": s.id, **bounds(s, ("inventory_limit", "revenue_target", "min_consumers"))}
                    for s in model.sellers],
        "consumers": [{"id": c.id, **bounds(c, ("min_sellers",))} for c in model.consumers],
        "impressions": [{"consumer": pi.consumer, **impression_to_dict(pi.impression)} for pi in model.impressions],
        "duals": duals_to_dict(model.duals),
    }


def history_from_dict(doc: dict) -> list:
    out = []
    for k, rec in enumerate(_list(_require(doc, "history", ""), "history")):
        where = f"history[{k}]."
        imp = impression_from_dict(_require(rec, "impression", where), where + "impression.")
        out.append((imp, plan_from_ids(imp, _require(rec, "plan", where), where=where + "plan")))
    return out


def history_to_dict(history) -> dict:
    return {"history": [
        {"impression": impression_to_dict(imp), "plan": imp.to_caller_order(plan)} for imp, plan in history
    ]}
