"""Binds every library model to the solver producing its optimal policy and value."""

from __future__ import annotations

import logging
from typing import Callable, Dict, Optional, Tuple

from ..process_model import SecondStopRule
from ..schemas import ProblemSpec, ThresholdPolicy
from . import fullinfo, noinfo, randomhorizon

logger = logging.getLogger(__name__)

Solution = Tuple[ThresholdPolicy, float]


def _noinfo(spec: ProblemSpec) -> Solution:
    table = noinfo.solve_model(spec.maturity_model, spec.n)
    stages = {r: table.first_stop_stage(r) for r in table.ranks}
    return ThresholdPolicy(stage_thresholds={r: k for r, k in stages.items() if k is not None}), table.value


def _discount(spec: ProblemSpec) -> Solution:
    r, value = noinfo.discounted_solution(spec.beta)
    return ThresholdPolicy(stage_thresholds={1: r}), value


def _fidp(spec: ProblemSpec) -> Solution:
    cutoffs = fullinfo.stage_cutoffs(fullinfo.fidp_threshold, spec.n)
    return ThresholdPolicy(value_thresholds=cutoffs), fullinfo.fidp_value(spec.n).value


def _fidp_recall(spec: ProblemSpec) -> Solution:
    cutoffs = fullinfo.stage_cutoffs(fullinfo.fidp_recall_threshold, spec.n)
    value, _ = fullinfo.fidp_recall_value(spec.n)
    return ThresholdPolicy(value_thresholds=cutoffs), value


def _bcdp(spec: ProblemSpec) -> Solution:
    cutoffs = fullinfo.stage_cutoffs(fullinfo.bcdp_threshold, spec.n)
    return ThresholdPolicy(value_thresholds=cutoffs), fullinfo.bcdp_value(spec.n).value


def _rh_prior(spec: ProblemSpec) -> Solution:
    table = randomhorizon.rh_value(randomhorizon.PriorTail.from_prior(spec.prior))
    return ThresholdPolicy(value_thresholds=randomhorizon.stage_thresholds(table)), table.value


def _rh_geometric(spec: ProblemSpec) -> Solution:
    solution = randomhorizon.geometric_unbounded(spec.p)
    value = solution.value
    if spec.closing == "immediate":
        value = randomhorizon.geometric_alt_maturity(spec.p).value
    return ThresholdPolicy(value_thresholds=[solution.x0]), value


def _ka(spec: ProblemSpec) -> Solution:
    table = randomhorizon.ka_value(spec.n)
    policy = ThresholdPolicy(value_thresholds=randomhorizon.stage_thresholds(table), label=randomhorizon.KA_LABEL)
    return policy, table.value


def _ka_geometric(spec: ProblemSpec) -> Solution:
    threshold, _ = randomhorizon.ka_geometric(spec.p)
    return ThresholdPolicy(value_thresholds=[threshold], label="1-SLA"), randomhorizon.ka_geometric_value(spec.p)


def _best2_geometric(spec: ProblemSpec) -> Solution:
    threshold = randomhorizon.best2_reduction(spec.p)
    return (
        ThresholdPolicy(value_thresholds=[threshold], label="reduced to relative maxima"),
        randomhorizon.ka_geometric_value(spec.p),
    )


SOLVERS: Dict[str, Callable[[ProblemSpec], Solution]] = {
    "bc": _noinfo,
    "bc-recall": _noinfo,
    "bc-best": _noinfo,
    "bc-best-recall": _noinfo,
    "best2": _noinfo,
    "best2-best-only": _noinfo,
    "discount": _discount,
    "fidp": _fidp,
    "fidp-recall": _fidp_recall,
    "bcdp": _bcdp,
    "rh-prior": _rh_prior,
    "rh-geometric": _rh_geometric,
    "ka": _ka,
    "ka-geometric": _ka_geometric,
    "best2-geometric": _best2_geometric,
}


def optimal_policy(spec: ProblemSpec) -> Solution:
    policy, value = SOLVERS[spec.model](spec)
    logger.info("optimal_policy model=%s label=%r value=%.12g", spec.model, policy.label, value)
    return policy, value


def second_stop_rule(spec: ProblemSpec) -> Optional[SecondStopRule]:
    """Stop rule on new second-largest values, for models that allow such stops."""
    if spec.model == "best2-geometric":
        return randomhorizon.second_best_stop_rule(spec.p)
    return None
