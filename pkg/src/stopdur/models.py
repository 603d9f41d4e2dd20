"""Canonical library of duration models and the parameters each one needs."""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, Tuple


class MaturityModel(str, Enum):
    BEST_NO_RECALL = "BestNoRecall"
    BEST_RECALL = "BestRecall"
    BEST_REQUIRE_OVERALL_BEST = "BestRequireOverallBest"
    BEST_RECALL_REQUIRE_OVERALL_BEST = "BestRecallRequireOverallBest"
    BEST_OR_SECOND_NO_RECALL = "BestOrSecondNoRecall"
    BEST_OR_SECOND_STOP_AT_BEST_ONLY = "BestOrSecondStopAtBestOnly"

    @property
    def status_rank(self) -> int:
        """Largest running rank under which the selected item keeps its status."""
        if self in (MaturityModel.BEST_OR_SECOND_NO_RECALL, MaturityModel.BEST_OR_SECOND_STOP_AT_BEST_ONLY):
            return 2
        return 1

    @property
    def candidate_rank(self) -> int:
        """Largest relative rank that may be selected."""
        return 2 if self is MaturityModel.BEST_OR_SECOND_NO_RECALL else 1

    @property
    def recall(self) -> bool:
        return self in (MaturityModel.BEST_RECALL, MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST)

    @property
    def requires_overall_best(self) -> bool:
        return self in (
            MaturityModel.BEST_REQUIRE_OVERALL_BEST,
            MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST,
        )


# rank wildcard for recall policies: the selected item is the best so far
ANY_RANK = 0


def _base_model(name: str, description: str, **overrides: Any) -> Dict[str, Any]:
    entry = {
        "name": name,
        "description": description,
        "information": "none",
        "maturity": MaturityModel.BEST_NO_RECALL,
        "horizon": "fixed",
        "params": ("n",),
        "min_n": 2,
        "normalized": True,
        "closing": "standard",
    }
    entry.update(overrides)
    return entry


MODEL_LIBRARY: Dict[str, Dict[str, Any]] = {
    "bc": _base_model(
        "bc",
        "Duration of the relatively best item, no recall.",
    ),
    "bc-recall": _base_model(
        "bc-recall",
        "Duration of the best-so-far item with recall at the decision moment.",
        maturity=MaturityModel.BEST_RECALL,
    ),
    "bc-best": _base_model(
        "bc-best",
        "Duration paid only when the selected relatively best item is the overall best.",
        maturity=MaturityModel.BEST_REQUIRE_OVERALL_BEST,
    ),
    "bc-best-recall": _base_model(
        "bc-best-recall",
        "Recall variant of the overall-best requirement: a fixed-time rule.",
        maturity=MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST,
    ),
    "best2": _base_model(
        "best2",
        "Duration of best-or-second status, stopping on relative rank one or two.",
        maturity=MaturityModel.BEST_OR_SECOND_NO_RECALL,
    ),
    "best2-best-only": _base_model(
        "best2-best-only",
        "Duration of best-or-second status, stopping on relatively best items only.",
        maturity=MaturityModel.BEST_OR_SECOND_STOP_AT_BEST_ONLY,
    ),
    "discount": _base_model(
        "discount",
        "Infinite sequence with discounted duration of the relatively best item.",
        horizon="infinite",
        params=("beta",),
        min_n=None,
    ),
    "fidp": _base_model(
        "fidp",
        "Full-information duration of the relatively best value, fixed horizon.",
        information="full",
        min_n=1,
    ),
    "fidp-recall": _base_model(
        "fidp-recall",
        "Full-information duration with recall of the running maximum.",
        information="full",
        maturity=MaturityModel.BEST_RECALL,
        min_n=1,
    ),
    "bcdp": _base_model(
        "bcdp",
        "Full-information duration paid only when the selected value is the overall maximum.",
        information="full",
        maturity=MaturityModel.BEST_REQUIRE_OVERALL_BEST,
        min_n=1,
    ),
    "rh-prior": _base_model(
        "rh-prior",
        "Full-information duration under a bounded random horizon with a prior.",
        information="full",
        horizon="general",
        params=("prior",),
        min_n=None,
    ),
    "rh-geometric": _base_model(
        "rh-geometric",
        "Full-information duration under an unbounded geometric horizon.",
        information="full",
        horizon="geometric",
        params=("p",),
        min_n=None,
        normalized=False,
    ),
    "ka": _base_model(
        "ka",
        "Full-information best-or-second duration, stopping on relative maxima, fixed horizon.",
        information="full",
        maturity=MaturityModel.BEST_OR_SECOND_STOP_AT_BEST_ONLY,
        min_n=1,
        normalized=False,
    ),
    "ka-geometric": _base_model(
        "ka-geometric",
        "Best-or-second duration under a geometric horizon, stopping on relative maxima.",
        information="full",
        maturity=MaturityModel.BEST_OR_SECOND_STOP_AT_BEST_ONLY,
        horizon="geometric",
        params=("p",),
        min_n=None,
        normalized=False,
        closing="immediate",
    ),
    "best2-geometric": _base_model(
        "best2-geometric",
        "Best-or-second duration under a geometric horizon, second-best stops allowed.",
        information="full",
        maturity=MaturityModel.BEST_OR_SECOND_NO_RECALL,
        horizon="geometric",
        params=("p",),
        min_n=None,
        normalized=False,
        closing="immediate",
    ),
}


def allowed_models() -> Tuple[str, ...]:
    return tuple(MODEL_LIBRARY.keys())


def model_entry(name: str) -> Dict[str, Any]:
    try:
        return MODEL_LIBRARY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(allowed_models())}") from None
