"""Observation processes, realized durations, and the simulation and enumeration oracles."""

from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Callable, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from .models import ANY_RANK, MaturityModel
from .schemas import ProblemSpec, SimulationReport, ThresholdPolicy, default_threads
from .utils.metrics import build_simulation_report

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 14
DEFAULT_HORIZON_CAP = 10**7
MAX_ENUMERATION_N = 7

SecondStopRule = Callable[[np.ndarray, np.ndarray], np.ndarray]


class NotACandidateError(ValueError):
    """Raised when a stop index is not a candidate under the maturity model."""


class InvalidPolicyError(ValueError):
    """Raised when a threshold policy does not fit the problem it is simulated on."""


class HorizonCapExceeded(RuntimeError):
    """Raised when a sampled horizon exceeds the simulation cap."""


class PermutationSample(BaseModel):
    ranks: List[int]

    @field_validator("ranks")
    @classmethod
    def _is_permutation(cls, v: List[int]) -> List[int]:
        if sorted(v) != list(range(1, len(v) + 1)):
            raise ValueError("ranks must be a permutation of 1..N")
        return v

    @property
    def n(self) -> int:
        return len(self.ranks)


class UniformSample(BaseModel):
    values: List[float]

    @field_validator("values")
    @classmethod
    def _in_unit(cls, v: List[float]) -> List[float]:
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError("values must lie in [0, 1]")
        return v


class HorizonDistribution(BaseModel):
    variant: Literal["fixed", "geometric", "general"]
    n: Optional[int] = None
    p: Optional[float] = None
    prior: Optional[List[float]] = None

    @model_validator(mode="after")
    def _variant_fields(self) -> "HorizonDistribution":
        if self.variant == "fixed" and (self.n is None or self.n < 1):
            raise ValueError("fixed horizon requires n >= 1")
        if self.variant == "geometric" and (self.p is None or not 0.0 < self.p < 1.0):
            raise ValueError("geometric horizon requires 0 < p < 1")
        if self.variant == "general":
            if not self.prior or abs(sum(self.prior) - 1.0) > 1e-9 or min(self.prior) < 0:
                raise ValueError("general horizon requires a probability vector")
            if self.prior[-1] <= 0:
                raise ValueError("general horizon requires p_n > 0")
        return self

    @classmethod
    def from_spec(cls, spec: ProblemSpec) -> "HorizonDistribution":
        horizon = spec.entry["horizon"]
        if horizon == "fixed":
            return cls(variant="fixed", n=spec.n)
        if horizon == "geometric":
            return cls(variant="geometric", p=spec.p)
        if horizon == "general":
            return cls(variant="general", prior=spec.prior)
        raise ValueError(f"model {spec.model} has no finite-observation horizon")

    def tail(self, upto: int) -> np.ndarray:
        """pi_k = P{N >= k} for k = 1..upto."""
        k = np.arange(1, upto + 1)
        if self.variant == "fixed":
            return (k <= self.n).astype(float)
        if self.variant == "geometric":
            return (1.0 - self.p) ** (k - 1)
        prior = np.asarray(self.prior, dtype=float)
        survival = np.cumsum(prior[::-1])[::-1]
        out = np.zeros(upto)
        m = min(upto, prior.size)
        out[:m] = survival[:m]
        return out

    def sample(self, rng: np.random.Generator, size: int, cap: int = DEFAULT_HORIZON_CAP) -> np.ndarray:
        if self.variant == "fixed":
            return np.full(size, self.n, dtype=np.int64)
        if self.variant == "geometric":
            draws = rng.geometric(self.p, size=size).astype(np.int64)
            if draws.max(initial=0) > cap:
                raise HorizonCapExceeded(f"sampled horizon {int(draws.max())} exceeds cap {cap}")
            return draws
        prior = np.asarray(self.prior, dtype=float)
        return rng.choice(prior.size, size=size, p=prior / prior.sum()).astype(np.int64) + 1


def _ranks(sample: Union[PermutationSample, Sequence[int]]) -> List[int]:
    if isinstance(sample, PermutationSample):
        return sample.ranks
    return PermutationSample(ranks=list(sample)).ranks


def _values(sample: Union[UniformSample, Sequence[float]]) -> List[float]:
    if isinstance(sample, UniformSample):
        return sample.values
    return UniformSample(values=list(sample)).values


def relative_ranks(sample: Union[PermutationSample, Sequence[int]]) -> List[int]:
    x = np.asarray(_ranks(sample))
    lower = np.tril(np.ones((x.size, x.size), dtype=bool))
    return ((x[None, :] <= x[:, None]) & lower).sum(axis=1).tolist()


def running_rank(sample: Union[PermutationSample, Sequence[int]], k: int, j: int) -> int:
    x = _ranks(sample)
    if not 1 <= k <= j <= len(x):
        raise IndexError(f"running rank needs 1 <= k <= j <= {len(x)}, got k={k} j={j}")
    return sum(1 for i in range(j) if x[i] <= x[k - 1])


def permutation_from_relative_ranks(y: Sequence[int]) -> List[int]:
    order: List[int] = []
    for k, r in enumerate(y, start=1):
        if not 1 <= r <= k:
            raise ValueError(f"relative rank {r} at stage {k} out of range")
        order.insert(r - 1, k)
    ranks = [0] * len(y)
    for position, item in enumerate(order, start=1):
        ranks[item - 1] = position
    return ranks


def _maturity(beats: Sequence[bool], start: int, rank: int, status_rank: int, end: int) -> int:
    """First stage after start where the held item's running rank exceeds status_rank, else end."""
    for j, beaten in enumerate(beats, start=start + 1):
        if beaten:
            rank += 1
            if rank > status_rank:
                return j
    return end


def duration_no_info(
    sample: Union[PermutationSample, Sequence[int]],
    stop: int,
    model: MaturityModel,
) -> int:
    """T(stop) - stop for the item selected at stop; 0 when an overall-best requirement fails."""
    x = _ranks(sample)
    n = len(x)
    if not 1 <= stop <= n:
        raise IndexError(f"stop {stop} outside 1..{n}")
    if model.recall:
        held = int(np.argmin(x[:stop]))
    else:
        held = stop - 1
        if relative_ranks(x[:stop])[-1] > model.candidate_rank:
            raise NotACandidateError(f"item {stop} is not a candidate under {model.value}")
    rank = sum(1 for i in range(stop) if x[i] <= x[held])
    maturity = _maturity([x[j] < x[held] for j in range(stop, n)], stop, rank, model.status_rank, n + 1)
    if model.requires_overall_best and maturity != n + 1:
        return 0
    return maturity - stop


def duration_full_info(
    sample: Union[UniformSample, Sequence[float]],
    stop: int,
    model: MaturityModel,
    horizon: int,
    closing: Literal["standard", "immediate"] = "standard",
) -> int:
    """Number of stages from stop during which the selected value keeps its status, up to the horizon."""
    x = _values(sample)
    if not 1 <= stop <= horizon <= len(x):
        raise IndexError(f"need 1 <= stop <= horizon <= {len(x)}, got stop={stop} horizon={horizon}")
    if model.recall:
        held = int(np.argmax(x[:stop]))
    else:
        held = stop - 1
        if sum(1 for i in range(stop) if x[i] >= x[held]) > model.candidate_rank:
            raise NotACandidateError(f"value at {stop} is not a candidate under {model.value}")
    rank = sum(1 for i in range(stop) if x[i] >= x[held])
    end = horizon + 1 if closing == "standard" else horizon
    maturity = _maturity([x[j] > x[held] for j in range(stop, horizon)], stop, rank, model.status_rank, end)
    if model.requires_overall_best and maturity != end:
        return 0
    return maturity - stop


def maturity_pmf_best2(n: int, i: int, r: int) -> np.ndarray:
    """P{T(i) = k | Y_i = r} for k = i+1..N+1 under best-or-second status."""
    if r not in (1, 2):
        raise ValueError(f"rank must be 1 or 2, got {r}")
    if not 1 <= i <= n or (r == 2 and i < 2):
        raise IndexError(f"stage {i} invalid for rank {r} and N={n}")
    k = np.arange(i + 1, n + 1, dtype=float)
    if r == 2:
        interior = 2.0 * (i - 1) * i / ((k - 2.0) * (k - 1.0) * k)
        last = i * (i - 1) / (n * (n - 1.0))
    else:
        # first better arrival at s, then the rank-two law from s
        interior = np.zeros(k.size)
        for idx, kk in enumerate(k):
            s = np.arange(i + 1, kk)
            interior[idx] = np.sum(i / (s * (s - 1.0)) * 2.0 * (s - 1.0) * s / ((kk - 2.0) * (kk - 1.0) * kk))
        last = 1.0 if n == 1 else i * (2.0 * n - i - 1.0) / (n * (n - 1.0))
    return np.append(interior, last)


# ---------------------------------------------------------------------------
# simulation oracle


def _validate_policy(spec: ProblemSpec, policy: ThresholdPolicy) -> None:
    entry = spec.entry
    maturity = spec.maturity_model
    if entry["horizon"] == "infinite":
        if set(policy.stage_thresholds) != {1}:
            raise InvalidPolicyError("discounted policies carry a single threshold for rank 1")
        return
    if entry["information"] == "none":
        if not policy.stage_thresholds:
            raise InvalidPolicyError(f"model {spec.model} needs stage thresholds")
        if maturity.recall != (ANY_RANK in policy.stage_thresholds):
            raise InvalidPolicyError("recall models take exactly the wildcard threshold")
        if max(policy.stage_thresholds) > maturity.candidate_rank:
            raise InvalidPolicyError(f"model {spec.model} cannot select rank {max(policy.stage_thresholds)}")
        return
    if not policy.value_thresholds:
        raise InvalidPolicyError(f"model {spec.model} needs value thresholds")
    bound = spec.horizon_bound
    if bound is not None and len(policy.value_thresholds) != bound:
        raise InvalidPolicyError(f"expected {bound} value thresholds, got {len(policy.value_thresholds)}")


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _rank_block(spec: ProblemSpec, policy: ThresholdPolicy, rng: np.random.Generator, m: int) -> np.ndarray:
    n = spec.n
    maturity = spec.maturity_model
    status = maturity.status_rank
    recall_stage = policy.stage_thresholds.get(ANY_RANK)
    amax = maturity.candidate_rank
    first_stage = np.full(amax + 2, n + 1, dtype=np.int64)
    for r, stage in policy.stage_thresholds.items():
        if r != ANY_RANK:
            first_stage[r] = stage

    stopped = np.zeros(m, dtype=bool)
    alive = np.zeros(m, dtype=bool)
    rank = np.zeros(m, dtype=np.int64)
    k_sel = np.zeros(m, dtype=np.int64)
    maturity_at = np.full(m, n + 1, dtype=np.int64)
    for k in range(1, n + 1):
        y = rng.integers(1, k + 1, size=m)
        held = stopped & alive
        rank += held & (y <= rank)
        lost = held & (rank > status)
        maturity_at[lost] = k
        alive &= ~lost
        if recall_stage is not None:
            go = ~stopped & (k >= recall_stage)
            rank[go] = 1
        else:
            go = ~stopped & (k >= first_stage[np.minimum(y, amax + 1)])
            rank[go] = y[go]
        stopped |= go
        alive |= go
        k_sel[go] = k

    duration = np.where(stopped, maturity_at - k_sel, 0)
    if maturity.requires_overall_best:
        duration = np.where(alive, duration, 0)
    return duration / n


def _discount_block(spec: ProblemSpec, policy: ThresholdPolicy, rng: np.random.Generator, m: int) -> np.ndarray:
    beta = spec.beta
    threshold = policy.stage_thresholds[1]
    record = np.ones(m)
    # record times: the next record after k is floor(k / U) + 1
    while (record < threshold).any():
        nxt = np.floor(record / (1.0 - rng.random(m))) + 1.0
        record = np.where(record < threshold, nxt, record)
    following = np.floor(record / (1.0 - rng.random(m))) + 1.0
    return np.power(beta, record) - np.power(beta, following)


def _value_block(
    spec: ProblemSpec,
    policy: ThresholdPolicy,
    rng: np.random.Generator,
    m: int,
    cap: int,
    second_stop: Optional[SecondStopRule],
) -> np.ndarray:
    maturity = spec.maturity_model
    status = maturity.status_rank
    horizons = HorizonDistribution.from_spec(spec).sample(rng, m, cap)
    last = int(horizons.max())
    thresholds = np.asarray(policy.value_thresholds, dtype=float)

    cur_max = np.full(m, -1.0)
    cur_second = np.full(m, -1.0)
    stopped = np.zeros(m, dtype=bool)
    alive = np.zeros(m, dtype=bool)
    held = np.zeros(m)
    rank = np.zeros(m, dtype=np.int64)
    k_sel = np.zeros(m, dtype=np.int64)
    maturity_at = np.zeros(m, dtype=np.int64)
    for j in range(1, last + 1):
        x = rng.random(m)
        active = j <= horizons
        sel = stopped & alive & active
        rank += sel & (x > held)
        lost = sel & (rank > status)
        maturity_at[lost] = j
        alive &= ~lost

        cutoff = thresholds[min(j, thresholds.size) - 1]
        free = active & ~stopped
        if maturity.recall:
            cur_max = np.where(active, np.maximum(cur_max, x), cur_max)
            go = free & (cur_max >= cutoff)
            held = np.where(go, cur_max, held)
            rank[go] = 1
        else:
            is_max = x > cur_max
            go = free & is_max & (x >= cutoff)
            rank[go] = 1
            if second_stop is not None:
                second = free & ~is_max & (x > cur_second) & ~go
                go2 = second & second_stop(np.maximum(cur_max, 0.0), x)
                rank[go2] = 2
                go = go | go2
            held = np.where(go, x, held)
            new_second = np.where(is_max, cur_max, np.maximum(cur_second, x))
            cur_second = np.where(active, new_second, cur_second)
            cur_max = np.where(active, np.maximum(cur_max, x), cur_max)
        stopped |= go
        alive |= go
        k_sel[go] = j

    end = horizons + 1 if spec.closing == "standard" else horizons
    maturity_at = np.where(alive, end, maturity_at)
    duration = np.where(stopped, maturity_at - k_sel, 0)
    if maturity.requires_overall_best:
        duration = np.where(alive, duration, 0)
    if spec.entry["normalized"]:
        return duration / spec.horizon_bound
    return duration.astype(float)


def simulate_policy(
    spec: ProblemSpec,
    policy: ThresholdPolicy,
    samples: int,
    seed: int,
    threads: Optional[int] = None,
    horizon_cap: int = DEFAULT_HORIZON_CAP,
    second_stop: Optional[SecondStopRule] = None,
) -> SimulationReport:
    """Monte Carlo mean payoff of a threshold policy.

    Replications are split into fixed-size blocks; block b draws from
    SeedSequence(seed, spawn_key=(b,)), so results do not depend on the thread count.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    _validate_policy(spec, policy)
    if spec.entry["horizon"] == "infinite":
        block_fn = lambda rng, m: _discount_block(spec, policy, rng, m)
    elif spec.entry["information"] == "none":
        block_fn = lambda rng, m: _rank_block(spec, policy, rng, m)
    else:
        block_fn = lambda rng, m: _value_block(spec, policy, rng, m, horizon_cap, second_stop)

    blocks = math.ceil(samples / BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, samples - b * BLOCK_SIZE) for b in range(blocks)]
    workers = max(1, min(threads or default_threads(), blocks))
    logger.info("simulate model=%s samples=%d blocks=%d threads=%d seed=%d", spec.model, samples, blocks, workers, seed)

    def run_block(b: int) -> np.ndarray:
        return block_fn(_block_rng(seed, b), sizes[b])

    if workers == 1:
        parts = [run_block(b) for b in range(blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_block, range(blocks)))
    return build_simulation_report(np.concatenate(parts), spec.model, seed, {"blocks": float(blocks)})


# ---------------------------------------------------------------------------
# exact enumeration oracle


def _check_enumerable(n: int) -> None:
    if not 1 <= n <= MAX_ENUMERATION_N:
        raise ValueError(f"exhaustive enumeration supports 1 <= N <= {MAX_ENUMERATION_N}, got {n}")


def _selectable(maturity: MaturityModel, y: int) -> bool:
    return maturity.recall or y <= maturity.candidate_rank


def _leaves(n: int) -> list:
    return [(tuple(relative_ranks(perm)), perm) for perm in itertools.permutations(range(1, n + 1))]


def _optimal_node(group: list, k: int, n: int, maturity: MaturityModel) -> Fraction:
    cont = Fraction(0)
    if k < n:
        children = defaultdict(list)
        for leaf in group:
            children[leaf[0][k]].append(leaf)
        cont = sum((len(c) * _optimal_node(c, k + 1, n, maturity) for c in children.values()), Fraction(0))
        cont /= len(group)
    if k == 0 or not _selectable(maturity, group[0][0][k - 1]):
        return cont
    stop = Fraction(sum(duration_no_info(perm, k, maturity) for _, perm in group), len(group) * n)
    return max(stop, cont)


def exhaustive_optimal_value(maturity: MaturityModel, n: int) -> Fraction:
    """Exact optimal normalized payoff over all rank-based stopping rules, by enumerating N! permutations."""
    _check_enumerable(n)
    return _optimal_node(_leaves(n), 0, n, maturity)


def _policy_stop(policy: ThresholdPolicy, maturity: MaturityModel, y: Sequence[int]) -> Optional[int]:
    recall_stage = policy.stage_thresholds.get(ANY_RANK)
    for k, r in enumerate(y, start=1):
        if recall_stage is not None:
            if k >= recall_stage:
                return k
        elif r <= maturity.candidate_rank and r in policy.stage_thresholds and k >= policy.stage_thresholds[r]:
            return k
    return None


def exhaustive_policy_value(maturity: MaturityModel, n: int, policy: ThresholdPolicy) -> Fraction:
    """Exact normalized payoff of a stage-threshold policy over all N! permutations."""
    _check_enumerable(n)
    total = 0
    leaves = _leaves(n)
    for y, perm in leaves:
        stop = _policy_stop(policy, maturity, y)
        if stop is not None:
            total += duration_no_info(perm, stop, maturity)
    return Fraction(total, len(leaves) * n)
