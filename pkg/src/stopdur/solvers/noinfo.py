"""No-information duration problems: embedded candidate chain, backward induction,
the best-or-second two-threshold rule, the classical variants and the discounted problem."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..models import ANY_RANK, MaturityModel
from ..numerics import digamma, harmonic_table, series_cutoff, trigamma
from ..schemas import TwoThresholds

logger = logging.getLogger(__name__)

RankPayoff = Callable[[int, int], float]

SERIES_TOL = 1e-13
# relative slack under which stop and continue count as a tie (ties stop)
TIE_TOL = 1e-12

CANDIDATE_RANKS: Dict[MaturityModel, Tuple[int, ...]] = {
    MaturityModel.BEST_NO_RECALL: (1,),
    MaturityModel.BEST_RECALL: (ANY_RANK,),
    MaturityModel.BEST_REQUIRE_OVERALL_BEST: (1,),
    MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST: (ANY_RANK,),
    MaturityModel.BEST_OR_SECOND_NO_RECALL: (1, 2),
    MaturityModel.BEST_OR_SECOND_STOP_AT_BEST_ONLY: (1,),
}


# ---------------------------------------------------------------------------
# embedded chain


def _falling(x: int, m: int) -> int:
    out = 1
    for i in range(m):
        out *= x - i
    return out


def transition_prob(a: int, n: int, r: Optional[int], s: Optional[int]) -> float:
    """Kernel of the candidate chain from stage r to stage s; None marks the absorbing state."""
    if a < 1:
        raise ValueError(f"candidate rank bound a must be >= 1, got {a}")
    if r is None:
        return 1.0 if s is None else 0.0
    if not 1 <= r <= n:
        raise ValueError(f"stage r={r} outside 1..{n}")
    if s is None:
        return 1.0 - a * sum(transition_prob(a, n, r, j) for j in range(r + 1, n + 1))
    if not 1 <= s <= n:
        raise ValueError(f"stage s={s} outside 1..{n}")
    if s <= r:
        raise ValueError(f"transition needs s > r, got r={r} s={s}")
    if r < a:
        return 1.0 / s if s == r + 1 else 0.0
    return _falling(r, a) / _falling(s, a + 1)


def embedded_row(a: int, n: int, k: int) -> Tuple[np.ndarray, float]:
    """Per-rank probabilities p(k, s) for s = k+1..N and the absorption probability."""
    row = np.array([transition_prob(a, n, k, s) for s in range(k + 1, n + 1)])
    return row, 1.0 - a * float(row.sum())


# ---------------------------------------------------------------------------
# payoffs, normalized by N


def best_payoff(n: int) -> RankPayoff:
    h = harmonic_table(n)
    return lambda k, r: k / n * (h[n] - h[k - 1])


def overall_best_payoff(n: int) -> RankPayoff:
    return lambda k, r: k * (n + 1 - k) / n**2


def phi_best2(n: int, k: int, r: int) -> float:
    if not 1 <= k <= n:
        raise ValueError(f"stage k={k} outside 1..{n}")
    if r == 1:
        return k / n**2 * (1 + k - n - 2 * n * digamma(k) + 2 * n * digamma(n))
    if r == 2:
        return k * (n - k + 1) / n**2
    return 0.0


def payoff(model: MaturityModel, n: int) -> RankPayoff:
    if model in (MaturityModel.BEST_NO_RECALL, MaturityModel.BEST_RECALL):
        return best_payoff(n)
    if model in (MaturityModel.BEST_REQUIRE_OVERALL_BEST, MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST):
        return overall_best_payoff(n)
    return lambda k, r: phi_best2(n, k, r)


def t_phi_best2(n: int, k: int) -> float:
    """Expected payoff of the next candidate seen from stage k (a = 2)."""
    if not 1 <= k < n:
        raise ValueError(f"mean operator needs 1 <= k < N, got k={k} N={n}")
    return 2.0 * k / n**2 * (k - n + n * (digamma(n) - digamma(k)))


def t_phi_best2_printed(n: int, k: int) -> float:
    """The published closed form of the mean operator, kept for comparison only."""
    if not 1 <= k < n:
        raise ValueError(f"mean operator needs 1 <= k < N, got k={k} N={n}")
    return (n - k) * ((2 * n - 1) * k + n - 1) / (n**2 * (n - 1)) + 2 * (k / n**2) * (digamma(n) - digamma(k))


def t_phi_kernel_sum(n: int, k: int) -> float:
    row, _ = embedded_row(2, n, k)
    return float(sum(p * (phi_best2(n, s, 1) + phi_best2(n, s, 2)) for s, p in enumerate(row, start=k + 1)))


def mean_operator_report(n: int) -> pd.DataFrame:
    rows = []
    for k in range(1, n):
        kernel = t_phi_kernel_sum(n, k)
        printed = t_phi_best2_printed(n, k)
        rows.append(
            {
                "k": k,
                "closed_form": t_phi_best2(n, k),
                "kernel_sum": kernel,
                "printed": printed,
                "printed_deviation": printed - kernel,
            }
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# backward induction


@dataclass(frozen=True)
class NoInfoValueTable:
    """Optimal values in duration units (expected T - stage), indexed by stage 1..N.

    ``w[k, c]`` is the value at stage k holding a candidate of rank ``ranks[c]``;
    ``w_tilde[k]`` is the value before observing stage k, with ``w_tilde[N+1] = 0``.
    """

    n: int
    ranks: Tuple[int, ...]
    w: np.ndarray
    w_tilde: np.ndarray
    stop: np.ndarray

    @property
    def value(self) -> float:
        return float(self.w_tilde[1] / self.n)

    def w_at(self, k: int, r: int) -> float:
        if r in self.ranks:
            return float(self.w[k, self.ranks.index(r)])
        return float(self.w_tilde[k + 1])

    def first_stop_stage(self, r: int) -> Optional[int]:
        stages = np.flatnonzero(self.stop[1 : self.n + 1, self.ranks.index(r)])
        return int(stages[0]) + 1 if stages.size else None


def backward_induction_noinfo(n: int, ranks: Sequence[int], phi: RankPayoff) -> NoInfoValueTable:
    ranks = tuple(sorted(set(ranks)))
    recall = ranks == (ANY_RANK,)
    if ANY_RANK in ranks and not recall:
        raise ValueError("the recall wildcard cannot be mixed with explicit ranks")
    w = np.zeros((n + 2, len(ranks)))
    w_tilde = np.zeros(n + 2)
    stop = np.zeros((n + 2, len(ranks)), dtype=bool)
    for k in range(n, 0, -1):
        cont = w_tilde[k + 1]
        for c, r in enumerate(ranks):
            stop_value = n * phi(k, r)
            stop[k, c] = stop_value >= cont - TIE_TOL * max(1.0, abs(cont))
            w[k, c] = max(stop_value, cont)
        if recall:
            w_tilde[k] = w[k, 0]
        else:
            live = [c for c, r in enumerate(ranks) if r <= k]
            w_tilde[k] = (w[k, live].sum() + (k - len(live)) * cont) / k
    logger.debug("backward_induction n=%d ranks=%s value=%.12g", n, ranks, w_tilde[1] / n)
    return NoInfoValueTable(n=n, ranks=ranks, w=w, w_tilde=w_tilde, stop=stop)


def solve_model(model: MaturityModel, n: int) -> NoInfoValueTable:
    return backward_induction_noinfo(n, CANDIDATE_RANKS[model], payoff(model, n))


def chain_expectation(table: NoInfoValueTable, k: int) -> float:
    """E w(W_1) started from stage k, summing the kernel over later candidate states."""
    a = max(table.ranks)
    if a == ANY_RANK:
        raise ValueError("recall tables have no embedded candidate chain")
    row, _ = embedded_row(a, table.n, k)
    return float(sum(p * sum(table.w_at(s, r) for r in table.ranks) for s, p in enumerate(row, start=k + 1)))


# ---------------------------------------------------------------------------
# best or second


def _rank2_cutoff(n: int) -> int:
    for k in range(1, n):
        if t_phi_best2(n, k) <= phi_best2(n, k, 2) + TIE_TOL:
            return k
    return n


def solve_best2(n: int) -> TwoThresholds:
    """First stopping stages for relative ranks 1 and 2 and the optimal value.

    The last continuation stage for rank 2 is ``k2 - 1``.
    """
    if n < 2:
        raise ValueError(f"best-or-second needs N >= 2, got {n}")
    table = solve_model(MaturityModel.BEST_OR_SECOND_NO_RECALL, n)
    k1, k2 = table.first_stop_stage(1), table.first_stop_stage(2)
    cutoff = _rank2_cutoff(n)
    if cutoff != k2:
        logger.warning("best2 rank-2 cutoff mismatch n=%d recursion=%d mean_operator=%d", n, k2, cutoff)
    return TwoThresholds(n=n, k1=k1, k2=k2, value=table.value)


def best2_value_from_display(n: int, k1: int, k2: int) -> float:
    """Value of the (k1, k2) rule from its explicit sum; needs k1 <= k2."""
    if k1 == 1:
        return phi_best2(n, 1, 1)
    k, s = k1 - 1, k2 - 1
    j = np.arange(k + 1, s + 1)
    phi1 = np.array([phi_best2(n, int(i), 1) for i in j])
    return float(np.sum(k / (j * (j - 1.0)) * phi1) + k / s * t_phi_best2(n, s))


def best2_value_printed(n: int, k: int, s: int) -> float:
    """The published closed form of the (k, s) value, kept for comparison only."""
    if k < 1 or s < 1:
        return math.nan
    d = (n - 1) * n
    return (
        ((n * (3 * n - 4) - 3) + k * (n - 3) * digamma(k)) / d
        + k * (2 * (n - 1) * digamma(n) + (5 - 3 * n) * digamma(s)) / d
        + k * (2 * (n**2 - 1) * (trigamma(s + 1) - trigamma(k + 1))) / d
        - k * (3 * n**3 + (2 * s - 3) * n**2 - 2 * (s**2 + s + 2) * n + s**2 + s) / ((n - 1) * n**2 * s)
    )


def best2_theorem_report(n: int) -> Dict[str, float]:
    sol = solve_best2(n)
    display = best2_value_from_display(n, sol.k1, sol.k2)
    printed = best2_value_printed(n, sol.k1 - 1, sol.k2 - 1)
    report = {
        "n": n,
        "k1": sol.k1,
        "k2": sol.k2,
        "recursion": sol.value,
        "display": display,
        "printed": printed,
        "display_deviation": display - sol.value,
        "printed_deviation": printed - sol.value,
    }
    logger.info(
        "best2_theorem n=%d recursion=%.12g display=%.12g printed=%.12g", n, sol.value, display, printed
    )
    return report


# ---------------------------------------------------------------------------
# classical variants


def classical_best_choice_threshold(n: int) -> int:
    """Smallest r with sum_{j=r}^{N-1} 1/j <= 1."""
    h = harmonic_table(n)
    for r in range(1, n + 1):
        if h[n - 1] - h[r - 1] <= 1.0:
            return r
    return n


def classical_bc_duration(n: int, recall: bool = False) -> Tuple[int, float]:
    if n < 2:
        raise ValueError(f"N must be >= 2, got {n}")
    model = MaturityModel.BEST_RECALL if recall else MaturityModel.BEST_NO_RECALL
    table = solve_model(model, n)
    return table.first_stop_stage(table.ranks[0]), table.value


def choice_of_best_threshold_values(n: int) -> np.ndarray:
    """Value of every threshold rule r = 1..N under the overall-best requirement (index r-1)."""
    j = np.arange(1, n + 1, dtype=float)
    phi = j * (n + 1 - j) / n**2
    tail = np.zeros(n + 1)
    tail[1:] = _suffix(phi[1:] / (j[1:] * (j[1:] - 1.0)))
    values = (j - 1.0) * tail[:n]
    # r = 1 stops on the first item, which is always a record
    values[0] = phi[0]
    return values


def bc_duration_choice_of_best(n: int, recall: bool = False) -> Tuple[int, float]:
    if n < 2:
        raise ValueError(f"N must be >= 2, got {n}")
    if recall:
        table = solve_model(MaturityModel.BEST_RECALL_REQUIRE_OVERALL_BEST, n)
        return table.first_stop_stage(ANY_RANK), table.value
    table = solve_model(MaturityModel.BEST_REQUIRE_OVERALL_BEST, n)
    return table.first_stop_stage(1), table.value


# ---------------------------------------------------------------------------
# discounted problem on an infinite sequence


def _discount_terms(beta: float, start: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """b_j = beta^j / j and H_{j-1} for j = 1..J, with J set by the remainder bound."""
    h_bound = lambda j: (math.log(j) + 1.0) / (j + 1)
    cutoff = series_cutoff(lambda j: beta ** (j + 1) / (1.0 - beta) * h_bound(j), SERIES_TOL, start=max(start, 2))
    j = np.arange(1, cutoff + 1, dtype=float)
    b = np.exp(j * math.log(beta)) / j
    return b, harmonic_table(cutoff - 1)


def _suffix(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[::-1])[::-1]


def discounted_payoff(beta: float) -> np.ndarray:
    """phi(k) = (1 - beta) k sum_{j >= k} beta^j / j for k = 1..J (index k-1)."""
    b, _ = _discount_terms(beta)
    k = np.arange(1, b.size + 1)
    return (1.0 - beta) * k * _suffix(b)


def discounted_threshold(beta: float) -> int:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    b, h = _discount_terms(beta)
    weighted = _suffix(b * h)
    plain = _suffix(b)
    size = b.size
    for r in range(1, size):
        # sum_{j>r} (beta^j/j)(H_{j-1} - H_{r-1})  vs  sum_{j>=r} beta^j/j
        lhs = weighted[r] - h[r - 1] * plain[r]
        if lhs <= plain[r - 1]:
            return r
    raise ValueError(f"no threshold found within the truncated series for beta={beta}")


def discounted_value(beta: float, r: int) -> float:
    """Expected payoff of stopping at the first record at or after stage r."""
    if r < 1:
        raise ValueError(f"threshold must be >= 1, got {r}")
    phi = discounted_payoff(beta)
    if r == 1:
        return float(phi[0])
    k = np.arange(r, phi.size + 1, dtype=float)
    return float(np.sum((r - 1) / (k * (k - 1.0)) * phi[r - 1 :]))


def discounted_solution(beta: float) -> Tuple[int, float]:
    r = discounted_threshold(beta)
    return r, discounted_value(beta, r)
