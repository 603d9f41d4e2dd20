"""Registry of published reference figures and the library calls that recompute them."""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .numerics import RootBracket, find_root
from .schemas import ConstantCheck
from .solvers import fullinfo, noinfo, randomhorizon

logger = logging.getLogger(__name__)

ASYMPTOTE_STAGES = 10_000
CLASSICAL_N = 5000
SWEEP_N = 10_000


def _classical_value() -> float:
    return noinfo.classical_bc_duration(CLASSICAL_N)[1]


def _classical_fraction() -> float:
    return noinfo.classical_bc_duration(CLASSICAL_N)[0] / CLASSICAL_N


def _choice_of_best_root() -> float:
    return find_root(lambda x: -math.log(x) - 2.0 + 2.0 * x, RootBracket(lo=0.05, hi=0.5))


def _choice_of_best_value() -> float:
    return float(noinfo.choice_of_best_threshold_values(SWEEP_N).max())


def _choice_of_best_recall_value() -> float:
    return noinfo.bc_duration_choice_of_best(SWEEP_N, recall=True)[1]


def _fidp_asymptote() -> float:
    return ASYMPTOTE_STAGES * (1.0 - fullinfo.fidp_threshold(ASYMPTOTE_STAGES))


def _fidp_recall_asymptote() -> float:
    return ASYMPTOTE_STAGES * (1.0 - fullinfo.fidp_recall_threshold(ASYMPTOTE_STAGES))


ConstantEntry = Tuple[float, Callable[[], float], float]

CONSTANTS: Dict[str, ConstantEntry] = {
    "classical_duration_value": (2.0 * math.exp(-2.0), _classical_value, 5e-3),
    "classical_duration_threshold": (math.exp(-2.0), _classical_fraction, 5e-3),
    "choice_of_best_threshold": (0.20388, _choice_of_best_root, 1e-4),
    "choice_of_best_value": (0.1618, _choice_of_best_value, 1e-3),
    "choice_of_best_recall_value": (0.25, _choice_of_best_recall_value, 1e-3),
    "fidp_z": (2.1198, fullinfo.asymptotic_z, 1e-3),
    "fidp_threshold_asymptote": (2.1198, _fidp_asymptote, 1e-2),
    "fidp_limit_constant": (0.435171, fullinfo.fidp_limit_constant, 1e-3),
    "fidp_recall_z": (1.345, fullinfo.asymptotic_recall_z, 1e-2),
    "fidp_recall_threshold_asymptote": (1.345, _fidp_recall_asymptote, 1e-2),
    "bcdp_c": (1.2564, fullinfo.bcdp_limit_c, 1e-3),
    "bcdp_limit_value": (0.31096, fullinfo.bcdp_limit_value, 1e-4),
    "bcdp_recall_limit_value": (0.33536, fullinfo.bcdp_recall_limit_value, 1e-4),
    "geometric_mu_star": (3.3145, randomhorizon.mu_star, 1e-3),
    "geometric_mu_star_inverse": (0.3017046, lambda: 1.0 / randomhorizon.mu_star(), 1e-5),
}


def allowed_constants() -> Tuple[str, ...]:
    return tuple(CONSTANTS.keys())


def check_constants(names: Optional[Iterable[str]] = None) -> List[ConstantCheck]:
    selected = list(names) if names is not None else list(CONSTANTS)
    unknown = [name for name in selected if name not in CONSTANTS]
    if unknown:
        raise ValueError(f"unknown constants {unknown}; expected any of {', '.join(allowed_constants())}")
    checks = []
    for name in selected:
        quoted, compute, tol = CONSTANTS[name]
        check = ConstantCheck(name=name, quoted=quoted, computed=compute(), tolerance=tol)
        logger.info("constant name=%s quoted=%.12g computed=%.12g ok=%s", name, quoted, check.computed, check.ok)
        checks.append(check)
    return checks
