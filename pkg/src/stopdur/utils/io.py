import json
from pathlib import Path
from typing import Any, Dict

import pandas as pd

SIGNIFICANT_DIGITS = 12


def round_significant(value: Any) -> Any:
    """Floats to 12 significant digits; everything else unchanged."""
    if isinstance(value, float):
        return float(format(value, f".{SIGNIFICANT_DIGITS}g"))
    return value


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, f".{SIGNIFICANT_DIGITS}g")
    return str(value)


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_json(obj))


def records_frame(results: Dict[str, Any]) -> pd.DataFrame:
    """One (parameter, value) row per result, values already formatted."""
    return pd.DataFrame(
        {"parameter": list(results.keys()), "value": [format_value(v) for v in results.values()]},
        columns=["parameter", "value"],
    )


def dumps_csv(results: Dict[str, Any]) -> str:
    return records_frame(results).to_csv(index=False, lineterminator="\r\n")


def write_text(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
