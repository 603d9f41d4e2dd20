from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from stopdur.schemas import SimulationReport

CI_Z = 1.959963984540054


def build_simulation_report(
    payoffs: np.ndarray,
    model: str,
    seed: int,
    diagnostics: Optional[Dict[str, float]] = None,
) -> SimulationReport:
    """Summarise per-replication payoffs into a SimulationReport with a 95% normal interval."""
    payoffs = np.asarray(payoffs, dtype=float)
    if payoffs.size == 0:
        raise ValueError("simulation produced no replications")
    if not np.isfinite(payoffs).all():
        raise ValueError("simulation produced non-finite payoffs")

    samples = int(payoffs.size)
    mean = float(payoffs.mean())
    std_error = float(payoffs.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    diagnostics = {
        **(diagnostics or {}),
        "stopped_fraction": float((payoffs != 0).mean()),
        "max_payoff": float(payoffs.max()),
    }
    return SimulationReport(
        model=model,
        mean=mean,
        std_error=std_error,
        samples=samples,
        seed=seed,
        ci_low=mean - CI_Z * std_error,
        ci_high=mean + CI_Z * std_error,
        diagnostics=diagnostics,
    )
