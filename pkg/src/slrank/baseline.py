"""Score-based ranking used in production before the LP ranker.

Each item is scored as organic revenue plus ``w`` times ad revenue, and the
top m scores are displayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Impression, InstanceValidationError, RankingPlan
from .ranker import top_m_indices


@dataclass(frozen=True)
class ScoreConfig:
    w: float = 1.0

    def __post_init__(self):
        if not self.w >= 0.0:
            raise ValueError("w must be nonnegative")


def scores(imp: Impression, cfg: ScoreConfig) -> np.ndarray:
    """s_j = r_j t_j p_j + w r_j ad_j p_j."""
    out = np.empty(imp.n)
    for j, it in enumerate(imp.items):
        if not it.has_rates:
            raise InstanceValidationError(
                "score ranking needs price, take_rate and ad_rate", f"items[{j}]"
            )
        out[j] = it.ptr * it.take_rate * it.price + cfg.w * it.ptr * it.ad_rate * it.price
    return out


def score_rank(imp: Impression, cfg: ScoreConfig = ScoreConfig()) -> RankingPlan:
    return RankingPlan.from_indices(top_m_indices(scores(imp, cfg), imp.m), "baseline")
