from __future__ import annotations

from functools import partial

import numpy as np

from .schemas import SimulationReport


def _finite_estimate(report: SimulationReport, reference: float) -> bool:
    values = np.array([report.mean, report.std_error, report.ci_low, report.ci_high, reference], dtype=float)
    return bool(np.isfinite(values).all())


def _non_negative_payoff(report: SimulationReport, reference: float) -> bool:
    return report.mean >= 0.0 and reference >= 0.0


def _within_std_errors(width: float, report: SimulationReport, reference: float) -> bool:
    if report.std_error == 0.0:
        return abs(report.mean - reference) <= 1e-12 * max(1.0, abs(reference))
    return abs(report.mean - reference) <= width * report.std_error


def _enough_samples(limit: int, report: SimulationReport, reference: float) -> bool:
    return report.samples >= limit


def _interval_ordered(report: SimulationReport, reference: float) -> bool:
    return report.ci_low <= report.mean <= report.ci_high


CHECKS = {
    "finite_estimate": _finite_estimate,
    "non_negative_payoff": _non_negative_payoff,
    "within_3_std_errors": partial(_within_std_errors, 3.0),
    "enough_samples": partial(_enough_samples, 1000),
    "interval_ordered": _interval_ordered,
}


class ReportVerifier:
    def __init__(self, checks=None):
        self.checks = checks or CHECKS

    def evaluate(self, report: SimulationReport, reference: float) -> tuple[bool, list[str]]:
        fails = [name for name, fn in self.checks.items() if not fn(report, reference)]
        return (len(fails) == 0, fails)
