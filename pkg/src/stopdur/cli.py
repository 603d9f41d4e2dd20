"""Command-line surface: one subcommand per duration model plus simulation and constants."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from .constants import check_constants
from .models import MaturityModel, allowed_models
from .numerics import NumericalError
from .process_model import HorizonCapExceeded
from .runner import SimulationRunner
from .schemas import DEFAULT_SAMPLES, DEFAULT_SEED, CliOutput, ProblemSpec, RunConfig
from .solvers import fullinfo, noinfo, randomhorizon
from .utils.io import dumps_csv, dumps_json, round_significant, write_json, write_text

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

Results = Dict[str, Any]


def _parse_prior(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"prior must be comma-separated numbers, got {text!r}") from None


def _stage_cutoffs(prefix: str, cutoffs: Dict[int, float]) -> Results:
    return {f"{prefix}{key}": value for key, value in sorted(cutoffs.items())}


# ---------------------------------------------------------------------------
# commands


def _noinfo_bc(params: Dict[str, Any], config: RunConfig) -> Results:
    n = params["n"]
    if params.get("require_best"):
        model = MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST if params.get("recall") else MaturityModel.BEST_REQUIRE_OVERALL_BEST
    else:
        model = MaturityModel.BEST_RECALL if params.get("recall") else MaturityModel.BEST_NO_RECALL
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    table = noinfo.solve_model(model, n)
    threshold = table.first_stop_stage(table.ranks[0])
    return {
        "maturity_model": model.value,
        "threshold": threshold,
        "threshold_fraction": threshold / n,
        "value": table.value,
    }


def _noinfo_best2(params: Dict[str, Any], config: RunConfig) -> Results:
    report = noinfo.best2_theorem_report(params["n"])
    results: Results = {
        "k1": report["k1"],
        "k2": report["k2"],
        "k2_last_continuation": report["k2"] - 1,
        "value": report["recursion"],
        "display_value": report["display"],
    }
    # the printed closed form is undefined when a threshold sits at stage 1
    if math.isfinite(report["printed"]):
        results["printed_value"] = report["printed"]
        results["printed_deviation"] = report["printed_deviation"]
    return results


def _noinfo_discount(params: Dict[str, Any], config: RunConfig) -> Results:
    r, value = noinfo.discounted_solution(params["beta"])
    return {"threshold": r, "value": value}


def _fidp(params: Dict[str, Any], config: RunConfig) -> Results:
    n = params["n"]
    table = fullinfo.fidp_value(n, params.get("grid_size") or fullinfo.DEFAULT_GRID_SIZE)
    results: Results = {"value": table.value}
    results.update(_stage_cutoffs("threshold_s", fullinfo.threshold_sequence(fullinfo.fidp_threshold, n).x))
    return results


def _fidp_recall(params: Dict[str, Any], config: RunConfig) -> Results:
    n = params["n"]
    value, _ = fullinfo.fidp_recall_value(n, params.get("grid_size") or fullinfo.DEFAULT_GRID_SIZE)
    results: Results = {"value": value}
    results.update(_stage_cutoffs("threshold_s", fullinfo.threshold_sequence(fullinfo.fidp_recall_threshold, n).x))
    return results


def _bcdp(params: Dict[str, Any], config: RunConfig) -> Results:
    n = params["n"]
    table = fullinfo.bcdp_value(n, params.get("grid_size") or fullinfo.DEFAULT_GRID_SIZE)
    results: Results = {"value": table.value}
    results.update(_stage_cutoffs("threshold_s", fullinfo.threshold_sequence(fullinfo.bcdp_threshold, n).x))
    return results


def _rh_prior(params: Dict[str, Any], config: RunConfig) -> Results:
    prior = randomhorizon.PriorTail.from_prior(ProblemSpec(model="rh-prior", prior=params["prior"]).prior)
    table = randomhorizon.rh_value(prior, params.get("grid_size") or fullinfo.DEFAULT_GRID_SIZE)
    results: Results = {"n": prior.n, "value": table.value}
    dp = dict(enumerate(randomhorizon.stage_thresholds(table), start=1))
    results.update(_stage_cutoffs("threshold_k", dp))
    results.update(_stage_cutoffs("one_step_threshold_k", randomhorizon.rh_thresholds(prior).x))
    return results


def _rh_geometric(params: Dict[str, Any], config: RunConfig) -> Results:
    p = params["p"]
    immediate = params.get("maturity") == "immediate"
    solution = randomhorizon.geometric_alt_maturity(p) if immediate else randomhorizon.geometric_unbounded(p)
    payoff = (lambda x: randomhorizon.geometric_alt_maturity_payoff(p, x)) if immediate else (
        lambda x: randomhorizon.geometric_stop_payoff(p, x)
    )
    return {
        "maturity": "immediate" if immediate else "standard",
        "x0": solution.x0,
        "value": solution.value,
        "stop_everywhere": solution.stop_everywhere,
        "smooth_fit_x0": randomhorizon.geometric_smooth_fit_threshold(p, payoff),
    }


def _ka(params: Dict[str, Any], config: RunConfig) -> Results:
    n = params["n"]
    table = randomhorizon.ka_value(n, params.get("grid_size") or fullinfo.DEFAULT_GRID_SIZE)
    results: Results = {
        "label": randomhorizon.KA_LABEL,
        "value": table.value,
        "conjecture_threshold": randomhorizon.ka_threshold(n),
        "printed_gain_root": randomhorizon.ka_G_root(n),
        "one_step_threshold": randomhorizon.ka_one_step_threshold(n),
    }
    results.update(_stage_cutoffs("threshold_s", table.threshold_sequence().x))
    return results


def _ka_geometric(params: Dict[str, Any], config: RunConfig) -> Results:
    threshold, mu = randomhorizon.ka_geometric(params["p"])
    return {"threshold": threshold, "mu_star": mu, "value": randomhorizon.ka_geometric_value(params["p"])}


def _best2_geometric(params: Dict[str, Any], config: RunConfig) -> Results:
    check = randomhorizon.best2_reduction_check(params["p"])
    return {**check, "value": randomhorizon.ka_geometric_value(params["p"])}


def _simulate(params: Dict[str, Any], config: RunConfig) -> Results:
    spec = ProblemSpec(
        model=params["model"],
        n=params.get("n"),
        beta=params.get("beta"),
        p=params.get("p"),
        prior=params.get("prior"),
        maturity=params.get("maturity"),
    )
    runner = SimulationRunner(threads=config.threads)
    result = runner.verify(spec, config.samples, config.seed)
    return {
        "label": result.label,
        "mean": result.report.mean,
        "std_error": result.report.std_error,
        "ci_low": result.report.ci_low,
        "ci_high": result.report.ci_high,
        "samples": result.report.samples,
        "seed": result.report.seed,
        "reference": result.reference,
        "z_score": result.z_score,
        "within_3_std_errors": "within_3_std_errors" not in result.failures,
    }


def _constants(params: Dict[str, Any], config: RunConfig) -> Results:
    results: Results = {}
    checks = check_constants()
    for check in checks:
        results[f"{check.name}_quoted"] = check.quoted
        results[f"{check.name}_computed"] = check.computed
        results[f"{check.name}_ok"] = check.ok
    results["all_ok"] = all(check.ok for check in checks)
    return results


COMMANDS: Dict[str, Callable[[Dict[str, Any], RunConfig], Results]] = {
    "noinfo-bc": _noinfo_bc,
    "noinfo-best2": _noinfo_best2,
    "noinfo-discount": _noinfo_discount,
    "fidp": _fidp,
    "fidp-recall": _fidp_recall,
    "bcdp": _bcdp,
    "rh-prior": _rh_prior,
    "rh-geometric": _rh_geometric,
    "ka": _ka,
    "ka-geometric": _ka_geometric,
    "best2-geometric": _best2_geometric,
    "simulate": _simulate,
    "constants": _constants,
}


def run(config: RunConfig) -> CliOutput:
    """Execute one validated command and return its machine-readable record."""
    logger.info("run command=%s params=%s", config.command, config.params)
    results = COMMANDS[config.command](config.params, config)
    params = {k: v for k, v in config.params.items() if v is not None}
    if config.command == "simulate":
        params.update({"samples": config.samples, "seed": config.seed})
    return CliOutput(
        command=config.command,
        params=params,
        results={key: round_significant(value) for key, value in results.items()},
    )


def render(output: CliOutput, output_format: str) -> str:
    if output_format == "csv":
        return dumps_csv(output.results)
    return dumps_json(output.model_dump())


# ---------------------------------------------------------------------------
# argument parsing


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Write the output to this file instead of standard output.")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="Output format.")
    common.add_argument("--threads", type=int, help="Worker threads (default: STOPDUR_THREADS or all cores).")
    common.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo replications.")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Base seed for the replication streams.")
    common.add_argument("--grid-size", type=int, help="Grid cells for full-information value recursions.")
    common.add_argument(
        "--log-level",
        default=os.environ.get("STOPDUR_LOG_LEVEL", "WARNING"),
        help="Logging level for messages on standard error.",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="stopdur", description="Optimal stopping rules for duration problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("noinfo-bc", "Relatively best duration, no information.")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--recall", action="store_true", help="Allow recall of the best so far.")
    p.add_argument("--require-best", action="store_true", help="Pay only when the selected item is the overall best.")

    p = add("noinfo-best2", "Best-or-second duration, two-threshold rule.")
    p.add_argument("--n", type=int, required=True)

    p = add("noinfo-discount", "Discounted duration on an infinite sequence.")
    p.add_argument("--beta", type=float, required=True)

    for name, help_text in (
        ("fidp", "Full-information duration, fixed horizon."),
        ("fidp-recall", "Full-information duration with recall."),
        ("bcdp", "Full-information duration of the overall maximum."),
        ("ka", "Full-information best-or-second duration, stopping on relative maxima."),
    ):
        p = add(name, help_text)
        p.add_argument("--n", type=int, required=True)

    p = add("rh-prior", "Full-information duration under a bounded random horizon.")
    p.add_argument("--prior", type=_parse_prior, help="Comma-separated P(N = k) for k = 1..n.")
    p.add_argument("--p", type=float, help="Build a truncated geometric prior with this p (needs --n).")
    p.add_argument("--n", type=int, help="Horizon bound for the truncated geometric prior.")

    p = add("rh-geometric", "Full-information duration under a geometric horizon.")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--maturity", choices=("standard", "immediate"), default="standard")

    for name, help_text in (
        ("ka-geometric", "Best-or-second duration under a geometric horizon, relative maxima only."),
        ("best2-geometric", "Best-or-second duration under a geometric horizon with second-best stops."),
    ):
        p = add(name, help_text)
        p.add_argument("--p", type=float, required=True)

    p = add("simulate", "Monte Carlo check of a model's optimal policy against its value.")
    p.add_argument("--model", required=True, choices=allowed_models())
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--prior", type=_parse_prior)
    p.add_argument("--maturity", choices=("standard", "immediate"))

    add("constants", "Recompute the published reference constants.")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    skip = {"command", "out", "format", "threads", "samples", "seed", "log_level"}
    params = {k: v for k, v in vars(args).items() if k not in skip and v is not None and v is not False}
    wants_prior = args.command == "rh-prior" or params.get("model") == "rh-prior"
    if wants_prior and "prior" not in params and "p" in params:
        if "n" not in params:
            raise ValueError("a truncated geometric prior needs both --p and --n")
        params["prior"] = randomhorizon.truncated_geometric_prior(params.pop("p"), params.pop("n"))
    kwargs: Dict[str, Any] = {
        "command": args.command,
        "params": params,
        "output_format": args.format,
        "output_path": args.out,
        "samples": args.samples,
        "seed": args.seed,
    }
    if args.threads is not None:
        kwargs["threads"] = args.threads
    return RunConfig(**kwargs)


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        config = config_from_args(args)
        output = run(config)
    except (NumericalError, HorizonCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if config.output_path and config.output_format == "json":
        write_json(config.output_path, output.model_dump())
    elif config.output_path:
        write_text(config.output_path, render(output, config.output_format))
    else:
        sys.stdout.write(render(output, config.output_format))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
