from __future__ import annotations

import argparse
import logging

from stopdur.models import allowed_models
from stopdur.numerics import NumericalError
from stopdur.process_model import HorizonCapExceeded
from stopdur.reporter import Reporter
from stopdur.runner import SimulationRunner
from stopdur.schemas import DEFAULT_SEED, ProblemSpec
from stopdur.solvers.randomhorizon import truncated_geometric_prior

MID_SIZE = 20
GEOMETRIC_P = 0.1

INSTANCES = {
    "bc": {"n": MID_SIZE},
    "bc-recall": {"n": MID_SIZE},
    "bc-best": {"n": MID_SIZE},
    "bc-best-recall": {"n": MID_SIZE},
    "best2": {"n": MID_SIZE},
    "best2-best-only": {"n": MID_SIZE},
    "discount": {"beta": 0.9},
    "fidp": {"n": MID_SIZE},
    "fidp-recall": {"n": MID_SIZE},
    "bcdp": {"n": MID_SIZE},
    "rh-prior": {"prior": truncated_geometric_prior(GEOMETRIC_P, MID_SIZE)},
    "rh-geometric": {"p": GEOMETRIC_P},
    "ka": {"n": MID_SIZE},
    "ka-geometric": {"p": GEOMETRIC_P},
    "best2-geometric": {"p": GEOMETRIC_P},
}


def main(models: list[str], samples: int, seed: int, threads: int | None, out_dir: str) -> int:
    runner = SimulationRunner(threads=threads)
    reporter = Reporter(out_dir)
    failed = []
    print("=== Monte Carlo consistency ===")
    for name in models:
        spec = ProblemSpec(model=name, **INSTANCES[name])
        try:
            result = runner.verify(spec, samples, seed)
        except (NumericalError, HorizonCapExceeded) as exc:
            path = reporter.write_failure(name, str(exc), [])
            print(f"{name}: error {exc} -> {path}")
            failed.append(name)
            continue
        path = reporter.write_consistency(name, result)
        print(f"{name}: reference={result.reference:.8g} mean={result.report.mean:.8g} z={result.z_score:.2f} -> {path}")
        if not result.ok:
            reporter.write_failure(name, "", result.failures)
            failed.append(name)
    print(f"Failed: {', '.join(failed) or 'none'}")
    return 1 if failed else 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Simulate every model's optimal policy and compare with its value.")
    parser.add_argument("--model", action="append", choices=allowed_models(), help="Restrict to these models.")
    parser.add_argument("--samples", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out-dir", default="reports")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args()
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s %(message)s")
    raise SystemExit(main(args.model or list(INSTANCES), args.samples, args.seed, args.threads, args.out_dir))
