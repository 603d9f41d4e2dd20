from __future__ import annotations

import math
import os
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import ANY_RANK, MODEL_LIBRARY, MaturityModel, model_entry

DEFAULT_SEED = 42
DEFAULT_SAMPLES = 100_000
PRIOR_SUM_TOL = 1e-9

Scalar = Union[float, int, bool, str]


def default_threads() -> int:
    raw = os.environ.get("STOPDUR_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"STOPDUR_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError("STOPDUR_THREADS must be at least 1")
        return value
    return os.cpu_count() or 1


def _open_unit(name: str, v: Optional[float]) -> Optional[float]:
    if v is not None and not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {v}")
    return v


class ProblemSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    n: Optional[int] = None
    beta: Optional[float] = None
    p: Optional[float] = None
    prior: Optional[List[float]] = None
    maturity: Optional[Literal["standard", "immediate"]] = None

    @field_validator("model")
    @classmethod
    def _known_model(cls, v: str) -> str:
        model_entry(v)
        return v

    @field_validator("beta")
    @classmethod
    def _beta_open_unit(cls, v: Optional[float]) -> Optional[float]:
        return _open_unit("beta", v)

    @field_validator("p")
    @classmethod
    def _p_open_unit(cls, v: Optional[float]) -> Optional[float]:
        return _open_unit("p", v)

    @field_validator("prior")
    @classmethod
    def _prior_is_distribution(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is None:
            return v
        if not v:
            raise ValueError("prior must not be empty")
        if any(not math.isfinite(x) or x < 0 for x in v):
            raise ValueError("prior entries must be finite and non-negative")
        if abs(sum(v) - 1.0) > PRIOR_SUM_TOL:
            raise ValueError(f"prior must sum to 1, got {sum(v)}")
        if v[-1] <= 0:
            raise ValueError("the last prior entry must be positive")
        return v

    @model_validator(mode="after")
    def _required_params(self) -> "ProblemSpec":
        entry = MODEL_LIBRARY[self.model]
        missing = [name for name in entry["params"] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"model {self.model} requires {', '.join(missing)}")
        if "n" in entry["params"] and self.n < entry["min_n"]:
            raise ValueError(f"model {self.model} requires n >= {entry['min_n']}, got {self.n}")
        if self.maturity is not None and entry["horizon"] != "geometric":
            raise ValueError(f"maturity applies to geometric horizons only, not {self.model}")
        if self.maturity == "standard" and entry["closing"] == "immediate":
            raise ValueError(f"model {self.model} is defined with immediate closing")
        return self

    @property
    def entry(self) -> Dict[str, Any]:
        return MODEL_LIBRARY[self.model]

    @property
    def maturity_model(self) -> MaturityModel:
        return self.entry["maturity"]

    @property
    def closing(self) -> str:
        return self.maturity or self.entry["closing"]

    @property
    def horizon_bound(self) -> Optional[int]:
        """Largest possible number of observations, None when unbounded."""
        if self.prior is not None and self.entry["horizon"] == "general":
            return len(self.prior)
        if self.entry["horizon"] == "fixed":
            return self.n
        return None


class ThresholdPolicy(BaseModel):
    """Threshold rule.

    Rank models use ``stage_thresholds``: relative rank -> first stage at which that
    rank is accepted (``ANY_RANK`` for recall, where the rule stops at that stage and
    keeps the best so far). Value models use ``value_thresholds``: entry k-1 is the
    cutoff at stage k; the last entry repeats on unbounded horizons.
    """

    model_config = ConfigDict(frozen=True)

    stage_thresholds: Dict[int, int] = Field(default_factory=dict)
    value_thresholds: List[float] = Field(default_factory=list)
    label: str = "optimal"

    @field_validator("stage_thresholds")
    @classmethod
    def _stages_positive(cls, v: Dict[int, int]) -> Dict[int, int]:
        for rank, stage in v.items():
            if rank < ANY_RANK or stage < 1:
                raise ValueError(f"invalid stage threshold {rank}->{stage}")
        if ANY_RANK in v and len(v) > 1:
            raise ValueError("the recall wildcard cannot be combined with rank thresholds")
        return v

    @field_validator("value_thresholds")
    @classmethod
    def _values_in_unit(cls, v: List[float]) -> List[float]:
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError("value thresholds must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _one_kind(self) -> "ThresholdPolicy":
        if bool(self.stage_thresholds) == bool(self.value_thresholds):
            raise ValueError("a policy carries either stage thresholds or value thresholds")
        return self

    def value_threshold(self, stage: int) -> float:
        idx = min(stage, len(self.value_thresholds)) - 1
        return self.value_thresholds[idx]


class TwoThresholds(BaseModel):
    n: int
    k1: int
    k2: int
    value: float

    @model_validator(mode="after")
    def _ordered(self) -> "TwoThresholds":
        if not 1 <= self.k1 <= self.k2 <= self.n:
            raise ValueError(f"thresholds must satisfy 1 <= k1 <= k2 <= n, got {self.k1}, {self.k2}, {self.n}")
        return self


class ThresholdSequence(BaseModel):
    """Real cutoffs keyed by stage (``index='stage'``) or by stages to go."""

    index: Literal["stage", "stages_to_go"]
    x: Dict[int, float]

    @field_validator("x")
    @classmethod
    def _in_unit(cls, v: Dict[int, float]) -> Dict[int, float]:
        if any(not 0.0 <= x <= 1.0 for x in v.values()):
            raise ValueError("thresholds must lie in [0, 1]")
        return v


class GeometricSolution(BaseModel):
    p: float
    x0: float
    value: float
    stop_everywhere: bool

    @model_validator(mode="after")
    def _consistent(self) -> "GeometricSolution":
        if not 0.0 <= self.x0 < 1.0:
            raise ValueError(f"x0 must lie in [0, 1), got {self.x0}")
        if self.stop_everywhere != (self.p > math.exp(-1.0)):
            raise ValueError("stop_everywhere must hold exactly when p > 1/e")
        return self


class TransformedState(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: float
    t: float
    alpha: float

    @model_validator(mode="after")
    def _ordered(self) -> "TransformedState":
        eps = 1e-12
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not (1.0 / (1.0 + self.alpha) - eps <= self.t <= self.s + eps and self.s <= 1.0 + eps):
            raise ValueError(f"state must satisfy 1/(1+alpha) <= t <= s <= 1, got s={self.s} t={self.t}")
        return self


class SimulationReport(BaseModel):
    model: str
    mean: float
    std_error: float
    samples: int
    seed: int
    ci_low: float
    ci_high: float
    diagnostics: Dict[str, float] = Field(default_factory=dict)

    @field_validator("std_error")
    @classmethod
    def _std_error_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("std_error must be non-negative")
        return v

    @field_validator("samples")
    @classmethod
    def _samples_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("samples must be at least 1")
        return v


class ConstantCheck(BaseModel):
    name: str
    quoted: float
    computed: float
    tolerance: float

    @property
    def abs_diff(self) -> float:
        return abs(self.computed - self.quoted)

    @property
    def ok(self) -> bool:
        return self.abs_diff <= self.tolerance


Command = Literal[
    "noinfo-bc",
    "noinfo-best2",
    "noinfo-discount",
    "fidp",
    "fidp-recall",
    "bcdp",
    "rh-prior",
    "rh-geometric",
    "ka",
    "ka-geometric",
    "best2-geometric",
    "simulate",
    "constants",
]

COMMAND_PARAMS: Dict[str, tuple] = {
    "noinfo-bc": ("n",),
    "noinfo-best2": ("n",),
    "noinfo-discount": ("beta",),
    "fidp": ("n",),
    "fidp-recall": ("n",),
    "bcdp": ("n",),
    "rh-prior": ("prior",),
    "rh-geometric": ("p",),
    "ka": ("n",),
    "ka-geometric": ("p",),
    "best2-geometric": ("p",),
    "simulate": ("model",),
    "constants": (),
}


class RunConfig(BaseModel):
    command: Command
    params: Dict[str, Any] = Field(default_factory=dict)
    output_format: Literal["csv", "json"] = "json"
    output_path: Optional[str] = None
    threads: int = Field(default_factory=default_threads)
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED

    @field_validator("threads", "samples")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("threads and samples must be at least 1")
        return v

    @model_validator(mode="after")
    def _params_present(self) -> "RunConfig":
        missing = [k for k in COMMAND_PARAMS[self.command] if self.params.get(k) is None]
        if missing:
            raise ValueError(f"command {self.command} requires --{', --'.join(missing)}")
        for key in ("p", "beta"):
            _open_unit(key, self.params.get(key))
        n = self.params.get("n")
        if n is not None and n < 1:
            raise ValueError(f"n must be at least 1, got {n}")
        return self


class CliOutput(BaseModel):
    """Machine-readable record emitted by every subcommand."""

    command: str
    params: Dict[str, Any] = Field(default_factory=dict)
    results: Dict[str, Scalar]

    @field_validator("results")
    @classmethod
    def _snake_case_keys(cls, v: Dict[str, Scalar]) -> Dict[str, Scalar]:
        for key in v:
            if key != key.lower() or " " in key or "-" in key:
                raise ValueError(f"result key {key!r} is not lower_snake_case")
        return v


class ConsistencyResult(BaseModel):
    """A simulated policy compared with its analytic or DP reference value."""

    model: str
    label: str
    reference: float
    report: SimulationReport
    ok: bool
    failures: List[str] = Field(default_factory=list)

    @property
    def z_score(self) -> float:
        if self.report.std_error == 0.0:
            return 0.0 if self.report.mean == self.reference else math.inf
        return (self.report.mean - self.reference) / self.report.std_error
