from __future__ import annotations

from pathlib import Path
from textwrap import dedent
from typing import List

from .schemas import ConsistencyResult, ConstantCheck


class Reporter:
    def __init__(self, out_dir: str = "reports"):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def write_constants(self, checks: List[ConstantCheck], name: str = "constants") -> str:
        p = self.out_dir / f"{name}.md"
        rows = "\n".join(
            f"| {c.name} | {c.quoted:.7g} | {c.computed:.10g} | {c.abs_diff:.2e} | {c.tolerance:.0e} | {'yes' if c.ok else 'NO'} |"
            for c in checks
        )
        failing = ", ".join(c.name for c in checks if not c.ok) or "none"
        header = dedent(
            """
            # Reference constants

            | Constant | Quoted | Computed | Abs diff | Tolerance | Within |
            | -------- | ------ | -------- | -------- | --------- | ------ |
            """
        ).strip()
        content = f"{header}\n{rows}\n\nOutside tolerance: {failing}\n"
        p.write_text(content, encoding="utf-8")
        return str(p)

    def write_consistency(self, spec_name: str, res: ConsistencyResult) -> str:
        p = self.out_dir / f"consistency_{spec_name}.md"
        failures = ", ".join(res.failures) if res.failures else "none"
        diag_lines = "\n".join(f"- {k}: {v:.6g}" for k, v in sorted(res.report.diagnostics.items())) or "-"
        table = dedent(
            f"""
            # Consistency: {spec_name}

            Policy: {res.label}

            | Metric | Value |
            | ------ | ----- |
            | Reference value | {res.reference:.10g} |
            | Simulated mean | {res.report.mean:.10g} |
            | Std error | {res.report.std_error:.3e} |
            | 95% interval | [{res.report.ci_low:.8g}, {res.report.ci_high:.8g}] |
            | z-score | {res.z_score:.2f} |
            | Samples | {res.report.samples} |
            | Seed | {res.report.seed} |
            """
        ).strip()
        content = f"{table}\n\nDiagnostics:\n{diag_lines}\n\nChecks failed: {failures}\n"
        p.write_text(content, encoding="utf-8")
        return str(p)

    def write_failure(self, model: str, error: str, failed_checks: List[str]) -> str:
        """Record a model whose simulation raised or whose report failed verification."""
        p = self.out_dir / f"failure_{model}.md"
        checks = "\n".join(f"- {name}" for name in failed_checks) or "- none (no report produced)"
        content = dedent(
            f"""
            # Consistency failure: {model}

            Error: {error or "none"}

            Failed checks:
            """
        ).strip()
        p.write_text(f"{content}\n{checks}\n", encoding="utf-8")
        return str(p)
