"""Revenue-maximizing ranking of sponsored listings under a relevance constraint."""

from .baseline import ScoreConfig, score_rank, scores
from .core import (
    FEAS_TOL,
    EvalResult,
    Impression,
    InstanceError,
    InstanceFormatError,
    InstanceValidationError,
    Item,
    RankingPlan,
    build_impression,
    evaluate,
    max_relevance,
)
from .oracles import brute_force_mip, breakpoints, exact_lp
from .ranker import (
    DualBracket,
    RankOutcome,
    choose_branch,
    dual_value_and_subgradient,
    mixing_weight,
    primal_response,
    rank_feasible,
    rank_randomized,
)

__version__ = "0.1.0"

__all__ = [
    "FEAS_TOL", "EvalResult", "Impression", "InstanceError", "InstanceFormatError",
    "InstanceValidationError", "Item", "RankingPlan", "build_impression", "evaluate",
    "max_relevance", "brute_force_mip", "breakpoints", "exact_lp", "DualBracket",
    "RankOutcome", "choose_branch", "dual_value_and_subgradient", "mixing_weight",
    "primal_response", "rank_feasible", "rank_randomized", "ScoreConfig", "score_rank", "scores",
]
