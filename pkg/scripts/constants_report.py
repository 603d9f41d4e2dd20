from __future__ import annotations

import argparse
import logging

from stopdur.constants import allowed_constants, check_constants
from stopdur.reporter import Reporter


def main(names: list[str] | None, out_dir: str) -> int:
    checks = check_constants(names)
    path = Reporter(out_dir).write_constants(checks)
    print("=== Reference constants ===")
    for c in checks:
        print(f"{c.name}: quoted={c.quoted:.7g} computed={c.computed:.10g} ok={c.ok}")
    print(f"Report: {path}")
    return 0 if all(c.ok for c in checks) else 1


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Recompute every quoted constant and write a markdown table.")
    parser.add_argument("--name", action="append", choices=allowed_constants(), help="Restrict to these constants.")
    parser.add_argument("--out-dir", default="reports", help="Directory for the markdown report.")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args()
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s %(message)s")
    raise SystemExit(main(args.name, args.out_dir))
