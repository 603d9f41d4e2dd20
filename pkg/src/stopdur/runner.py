from __future__ import annotations

import logging
from typing import Dict, Optional, Tuple

from .process_model import DEFAULT_HORIZON_CAP, simulate_policy
from .schemas import ConsistencyResult, ProblemSpec, SimulationReport, ThresholdPolicy
from .solvers import optimal_policy, second_stop_rule
from .verifier import ReportVerifier

logger = logging.getLogger(__name__)


class SimulationRunner:
    """Resolves optimal policies, simulates them and checks them against their values."""

    def __init__(
        self,
        threads: Optional[int] = None,
        horizon_cap: int = DEFAULT_HORIZON_CAP,
        verifier: ReportVerifier | None = None,
    ):
        self.threads = threads
        self.horizon_cap = horizon_cap
        self.verifier = verifier or ReportVerifier()
        self._policy_cache: Dict[str, Tuple[ThresholdPolicy, float]] = {}

    def policy(self, spec: ProblemSpec) -> Tuple[ThresholdPolicy, float]:
        key = spec.model_dump_json()
        if key not in self._policy_cache:
            self._policy_cache[key] = optimal_policy(spec)
        return self._policy_cache[key]

    def simulate(
        self,
        spec: ProblemSpec,
        samples: int,
        seed: int,
        policy: ThresholdPolicy | None = None,
    ) -> SimulationReport:
        if policy is None:
            policy, _ = self.policy(spec)
        return simulate_policy(
            spec,
            policy,
            samples,
            seed,
            threads=self.threads,
            horizon_cap=self.horizon_cap,
            second_stop=second_stop_rule(spec),
        )

    def verify(self, spec: ProblemSpec, samples: int, seed: int) -> ConsistencyResult:
        policy, reference = self.policy(spec)
        report = self.simulate(spec, samples, seed, policy)
        ok, fails = self.verifier.evaluate(report, reference)
        result = ConsistencyResult(
            model=spec.model,
            label=policy.label,
            reference=reference,
            report=report,
            ok=ok,
            failures=fails,
        )
        level = logging.INFO if ok else logging.WARNING
        logger.log(
            level,
            "verify model=%s reference=%.12g mean=%.12g std_error=%.3g z=%.2f failures=%s",
            spec.model, reference, report.mean, report.std_error, result.z_score, ",".join(fails) or "none",
        )
        return result
