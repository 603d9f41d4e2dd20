"""Random-horizon duration problems.

Covers a bounded horizon with a known prior, the unbounded geometric horizon in
closed form, the best-or-second duration restricted to relative maxima (finite
horizon and geometric horizon), and the geometric best-or-second chain whose
stopping sets reduce to a rule on the largest value.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, field_validator

from ..numerics import (
    DEFAULT_QUADRATURE,
    ConvergenceError,
    Quadrature,
    RootBracket,
    find_root,
    harmonic_table,
    integrate,
    series_cutoff,
)
from ..schemas import GeometricSolution, ThresholdSequence, TransformedState
from .fullinfo import (
    DEFAULT_GRID_SIZE,
    StageValueGrid,
    extrapolated_induction,
)

logger = logging.getLogger(__name__)

PRIOR_TOL = 1e-9
SERIES_TOL = 1e-14
KA_LABEL = "1-SLA (conjectured optimal)"
MU_BRACKET = RootBracket(lo=2.0, hi=5.0)


class PriorTail(BaseModel):
    """Survival function pi_k = P{N >= k} of a bounded horizon, pi[k-1] for k = 1..n."""

    model_config = ConfigDict(frozen=True)

    pi: List[float]

    @field_validator("pi")
    @classmethod
    def _is_survival(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("pi must not be empty")
        if abs(v[0] - 1.0) > PRIOR_TOL:
            raise ValueError(f"pi_1 must equal 1, got {v[0]}")
        if any(b > a + PRIOR_TOL for a, b in zip(v, v[1:])):
            raise ValueError("pi must be non-increasing")
        if v[-1] <= 0.0:
            raise ValueError("pi_n must be positive")
        return v

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=float)

    @classmethod
    def from_prior(cls, prior: Sequence[float]) -> "PriorTail":
        """Tail sums of a distribution on 1..n."""
        p = np.asarray(prior, dtype=float)
        tail = np.cumsum(p[::-1])[::-1]
        return cls(pi=(tail / tail[0]).tolist())

    @classmethod
    def truncated_geometric(cls, p: float, n: int) -> "PriorTail":
        """p_k proportional to p q^{k-1} on 1..n: pi_k = (q^{k-1} - q^n) / (1 - q^n)."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        q = 1.0 - p
        k = np.arange(1, n + 1)
        qn = q**n
        return cls(pi=((q ** (k - 1) - qn) / (1.0 - qn)).tolist())

    @classmethod
    def fixed(cls, n: int) -> "PriorTail":
        return cls(pi=[1.0] * n)

    def survival(self) -> np.ndarray:
        """r_k = pi_{k+1} / pi_k for k = 1..n, with r_n = 0."""
        pi = self.array
        out = np.zeros(self.n)
        out[:-1] = pi[1:] / pi[:-1]
        return out


def truncated_geometric_prior(p: float, n: int) -> List[float]:
    q = 1.0 - p
    k = np.arange(1, n + 1)
    weights = p * q ** (k - 1)
    return (weights / weights.sum()).tolist()


# ---------------------------------------------------------------------------
# bounded prior


def _check_stage(prior: PriorTail, k: int) -> None:
    if not 1 <= k <= prior.n:
        raise ValueError(f"stage must lie in 1..{prior.n}, got {k}")


def _stop_poly(prior: PriorTail, k: int, x: float) -> float:
    # sum_{i=k}^n (pi_i / pi_k) x^{i-k}
    pi = prior.array
    return float(np.polyval((pi[k - 1 :] / pi[k - 1])[::-1], x))


def rh_stop_payoff(prior: PriorTail, k: int, x: float, normalized: bool = True) -> float:
    """Expected duration of a relative maximum x accepted at stage k, given N >= k.

    With ``normalized`` the duration is divided by the horizon bound n.
    """
    _check_stage(prior, k)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"x must lie in (0, 1], got {x}")
    value = _stop_poly(prior, k, x)
    return value / prior.n if normalized else value


def _stop_tails(prior: PriorTail, x: float) -> np.ndarray:
    """Unnormalized int_x^1 s_i(y) dy for i = 1..n."""
    pi = prior.array
    # m[i, j] = j - i + 1 over the upper triangle j >= i
    m = np.arange(prior.n)[None, :] - np.arange(prior.n)[:, None] + 1.0
    upper = m >= 1.0
    safe = np.where(upper, m, 1.0)
    terms = np.where(upper, pi[None, :] * (1.0 - x**safe) / safe, 0.0)
    return terms.sum(axis=1) / pi


def _continue_value(prior: PriorTail, k: int, x: float) -> float:
    if k == prior.n:
        return 0.0
    pi = prior.array
    tails = _stop_tails(prior, x)
    i = np.arange(k + 1, prior.n + 1)
    return float(np.sum(pi[i - 1] / pi[k - 1] * x ** (i - k - 1) * tails[i - 1]))


def rh_continue_payoff(prior: PriorTail, k: int, x: float, normalized: bool = True) -> float:
    """Payoff of passing on x at stage k and accepting the next relative maximum."""
    _check_stage(prior, k)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    value = _continue_value(prior, k, x)
    return value / prior.n if normalized else value


def _rh_threshold(prior: PriorTail, k: int) -> float:
    gap = lambda x: _stop_poly(prior, k, x) - _continue_value(prior, k, x)
    if k == prior.n or gap(0.0) >= 0.0:
        return 0.0
    return find_root(gap, RootBracket(lo=0.0, hi=1.0))


def rh_thresholds(prior: PriorTail) -> ThresholdSequence:
    """One-step look-ahead cutoffs a*_k, keyed by stage."""
    return ThresholdSequence(index="stage", x={k: _rh_threshold(prior, k) for k in range(1, prior.n + 1)})


def rh_payoffs(grid: np.ndarray, prior: PriorTail) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Unnormalized s_k and int_x^1 s_k at the nodes, for k = n down to 1."""
    pi = prior.array
    n = prior.n
    degrees = np.arange(1, n + 1)
    powers = grid[None, :] ** degrees[:, None]
    poly = np.zeros_like(grid)
    for k in range(n, 0, -1):
        poly = pi[k - 1] + grid * poly
        weights = pi[k - 1 :] / degrees[: n - k + 1]
        tail = weights @ (1.0 - powers[: n - k + 1])
        yield poly / pi[k - 1], tail / pi[k - 1]


def rh_value(prior: PriorTail, grid_size: int = DEFAULT_GRID_SIZE, extrapolate: bool = True) -> StageValueGrid:
    """Optimal normalized payoff under the prior, by grid backward induction."""
    grid, values, thresholds = extrapolated_induction(
        grid_size, lambda g: rh_payoffs(g, prior), prior.survival(), extrapolate
    )
    logger.info("rh_value n=%d grid=%d value=%.12g", prior.n, grid_size, values[prior.n, 0] / prior.n)
    return StageValueGrid(stages=prior.n, grid=grid, values=values, thresholds=thresholds, normalizer=float(prior.n))


def stage_thresholds(table: StageValueGrid) -> List[float]:
    """Grid cutoffs ordered by stage k = 1..n."""
    return [float(np.clip(table.thresholds[table.stages - k], 0.0, 1.0)) for k in range(1, table.stages + 1)]


# ---------------------------------------------------------------------------
# unbounded horizons


def tail_stop_payoff(tail: Callable[[int], float], k: int, x: float, tol: float = SERIES_TOL) -> float:
    """E[n D_k(x)] = sum_{i>=k} (pi_i / pi_k) x^{i-k} for any survival function pi."""
    if not 0.0 <= x < 1.0:
        raise ValueError(f"x must lie in [0, 1), got {x}")
    if k < 1:
        raise ValueError(f"stage must be >= 1, got {k}")
    base = tail(k)
    if base <= 0.0:
        raise ValueError(f"pi_{k} must be positive")
    # pi_i / pi_k <= 1, so the remainder after m terms is at most x^m / (1 - x)
    terms = series_cutoff(lambda m: x**m / (1.0 - x), tol) if x > 0.0 else 1
    return float(sum(tail(k + m) / base * x**m for m in range(terms)))


def geometric_tail(p: float) -> Callable[[int], float]:
    q = 1.0 - p
    return lambda k: q ** (k - 1)


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")


def geometric_unbounded(p: float) -> GeometricSolution:
    """Optimal rule for a geometric horizon: stop at the first relative maximum above x0."""
    _check_p(p)
    q = 1.0 - p
    if p > math.exp(-1.0):
        return GeometricSolution(p=p, x0=0.0, value=-math.log1p(-q) / q, stop_everywhere=True)
    x0 = max(0.0, (1.0 - math.e * p) / q)
    value = x0 / (1.0 - q * x0) - math.log((1.0 - q) / (1.0 - q * x0)) / q
    return GeometricSolution(p=p, x0=x0, value=value, stop_everywhere=False)


def geometric_stop_payoff(p: float, x: float) -> float:
    return 1.0 / (1.0 - (1.0 - p) * x)


def geometric_continuation(p: float, x: float) -> float:
    """Value of passing on a relative maximum x and following the optimal rule afterwards."""
    _check_p(p)
    q = 1.0 - p
    x0 = geometric_unbounded(p).x0
    if x < x0:
        x = x0
    # accept the next relative maximum: q int_x^1 dy/(1 - qy) / (1 - qx)
    return math.log((1.0 - q * x) / p) / (1.0 - q * x)


def geometric_alt_maturity_payoff(p: float, x: float) -> float:
    """Payoff when status ends at the horizon itself: q / (1 - qx)."""
    _check_p(p)
    q = 1.0 - p
    if q * x >= 1.0:
        raise ValueError(f"q x must be < 1, got {q * x}")
    return q / (1.0 - q * x)


def geometric_alt_maturity(p: float) -> GeometricSolution:
    base = geometric_unbounded(p)
    return base.model_copy(update={"value": (1.0 - p) * base.value})


def geometric_smooth_fit_threshold(
    p: float, payoff: Callable[[float], float], q_rule: Quadrature = DEFAULT_QUADRATURE
) -> float:
    """Root of q int_x^1 f = (1 - qx) f(x): stopping now equals accepting the next relative maximum."""
    _check_p(p)
    q = 1.0 - p
    gap = lambda x: (1.0 - q * x) * payoff(x) - q * integrate(payoff, x, 1.0, q_rule)
    if gap(0.0) >= 0.0:
        return 0.0
    return find_root(gap, RootBracket(lo=0.0, hi=1.0))


# ---------------------------------------------------------------------------
# best or second, stopping on relative maxima, finite horizon


def _printed_u(n: int) -> Polynomial:
    coef = np.zeros(n)
    coef[: n - 1] = 2.0
    coef[n - 1] -= n
    return Polynomial(coef)


def _derived_u(n: int) -> Polynomial:
    coef = np.zeros(n)
    coef[: n - 1] = 2.0
    coef[n - 1] -= n - 2
    return Polynomial(coef)


def _tail_integral(poly: Polynomial) -> Polynomial:
    anti = poly.integ()
    return Polynomial([anti(1.0)]) - anti


def _one_step_gain(u: Callable[[int], Polynomial], n: int) -> Polynomial:
    # U_n(x) - sum_{k=1}^{n-1} x^{k-1} int_x^1 U_{n-k}
    gain = u(n)
    for k in range(1, n):
        gain = gain - Polynomial.basis(k - 1) * _tail_integral(u(n - k))
    return gain


def _check_n(n: int) -> None:
    if n < 1:
        raise ValueError(f"stages to go must be >= 1, got {n}")


def ka_U(n: int, x):
    """Printed stop payoff 2 sum_{k=1}^{n-1} x^{k-1} - n x^{n-1}."""
    _check_n(n)
    return _printed_u(n)(x)


def ka_G(n: int, x):
    """Printed one-step gain U_n(x) - sum_{k=1}^{n-1} x^{k-1} int_x^1 U_{n-k}."""
    _check_n(n)
    return _one_step_gain(_printed_u, n)(x)


def ka_stop_payoff(n: int, x):
    """Expected duration of a relative maximum x accepted with n stages to go.

    Counts the accepting stage and every later stage while the item stays among
    the two largest, through the horizon.
    """
    _check_n(n)
    return _derived_u(n)(x)


def ka_one_step_gain(n: int, x):
    _check_n(n)
    return _one_step_gain(_derived_u, n)(x)


def ka_conjecture_poly(n: int) -> Polynomial:
    """Left side of the conjectured threshold equation as a polynomial in x."""
    _check_n(n)
    h = harmonic_table(n)
    coef = np.full(n, 3.0)
    coef[n - 1] -= 2.0 * n
    k = np.arange(1, n)
    coef[k - 1] -= 2.0 * h[n - k - 1]
    coef[k] += 2.0 * h[k]
    return Polynomial(coef)


def _first_nonnegative(poly: Polynomial) -> float:
    if poly(0.0) >= 0.0:
        return 0.0
    if poly(1.0) < 0.0:
        return 1.0
    return find_root(lambda x: float(poly(x)), RootBracket(lo=0.0, hi=1.0))


def ka_threshold(n: int) -> float:
    """s_1 = 1; for n >= 2 the root of the conjectured equation in [0, 1]."""
    _check_n(n)
    if n == 1:
        return 1.0
    return _first_nonnegative(ka_conjecture_poly(n))


def ka_G_root(n: int) -> float:
    """Smallest x with a non-negative printed gain, 1 when it never is."""
    _check_n(n)
    return _first_nonnegative(_one_step_gain(_printed_u, n))


def ka_one_step_threshold(n: int) -> float:
    _check_n(n)
    if n == 1:
        return 0.0
    return _first_nonnegative(_one_step_gain(_derived_u, n))


def ka_payoffs(grid: np.ndarray, n: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Derived stop payoff and its tail, s = 1..n stages to go."""
    geometric = np.zeros_like(grid)
    harmonic_tail = np.zeros_like(grid)
    power = np.ones_like(grid)
    for s in range(1, n + 1):
        stop = 2.0 * geometric - (s - 2) * power
        tail = 2.0 * harmonic_tail - (s - 2) * (1.0 - power * grid) / s
        yield stop, tail
        geometric = geometric + power
        power = power * grid
        harmonic_tail = harmonic_tail + (1.0 - power) / s


def ka_value(n: int, grid_size: int = DEFAULT_GRID_SIZE, extrapolate: bool = True) -> StageValueGrid:
    """Expected duration of the best rule among those stopping on relative maxima."""
    _check_n(n)
    survival = np.ones(n)
    survival[-1] = 0.0
    grid, values, thresholds = extrapolated_induction(grid_size, lambda g: ka_payoffs(g, n), survival, extrapolate)
    logger.info("ka_value n=%d grid=%d value=%.12g label=%r", n, grid_size, values[n, 0], KA_LABEL)
    return StageValueGrid(stages=n, grid=grid, values=values, thresholds=thresholds)


def ka_consistency_report(n_max: int, grid_size: int = DEFAULT_GRID_SIZE) -> pd.DataFrame:
    """Printed gain root, conjecture root, derived one-step root and DP cutoff for n = 1..n_max."""
    table = ka_value(n_max, grid_size)
    rows = []
    for n in range(1, n_max + 1):
        rows.append(
            {
                "n": n,
                "printed_gain_root": ka_G_root(n),
                "conjecture_root": ka_threshold(n),
                "one_step_root": ka_one_step_threshold(n),
                "dp_threshold": float(np.clip(table.thresholds[n - 1], 0.0, 1.0)),
            }
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# best or second under a geometric horizon


def mu_star() -> float:
    """Root of mu^2 e^{2/mu} = e^3 with mu > 1."""
    return find_root(lambda mu: 2.0 * math.log(mu) + 2.0 / mu - 3.0, MU_BRACKET)


def ka_geometric_w(p: float, x: float) -> float:
    _check_p(p)
    q = 1.0 - p
    d = 1.0 - q * x
    return 2.0 * q / d - q * (1.0 - q) / d**2


def ka_geometric_tw(p: float, x: float) -> float:
    """Payoff of passing on x and accepting the next relative maximum."""
    _check_p(p)
    q = 1.0 - p
    d = 1.0 - q * x
    # ln((1 - qx) / (1 - q)), zero at x = 1
    log_ratio = math.log1p(-q * x) - math.log(p)
    return q / d * (2.0 * log_ratio + (1.0 - q) / d - 1.0)


def ka_geometric(p: float) -> Tuple[float, float]:
    """Threshold (mu* p - 1) / (p - 1) clamped to [0, 1), and mu*."""
    _check_p(p)
    mu = mu_star()
    return max(0.0, (mu * p - 1.0) / (p - 1.0)), mu


def ka_geometric_value(p: float) -> float:
    """Expected duration of the threshold rule, status ending at the horizon."""
    x, _ = ka_geometric(p)
    q = 1.0 - p
    d = 1.0 - q * x
    # int_x^1 w = 2 ln((1 - qx)/p) - 1 + p/(1 - qx)
    w_tail = 2.0 * (math.log1p(-q * x) - math.log(p)) - 1.0 + p / d
    return w_tail + x * q * w_tail / d


def transformed_state(p: float, x: float, y: float) -> TransformedState:
    """(s, t, alpha) for largest value x and second largest y."""
    _check_p(p)
    q = 1.0 - p
    return TransformedState(s=p / (1.0 - q * x), t=p / (1.0 - q * y), alpha=q / p)


def _reduced_gains(s, t):
    """F / alpha and G / alpha on the transformed coordinates."""
    log_st = np.log(s * t)
    f = s * (2.0 - s) - t * (s - 1.0 - log_st)
    g = t * (2.0 + log_st - s)
    return f, g


def best2_payoffs(state: TransformedState) -> Tuple[float, float, float]:
    """(W1, W2, TW): stop on the largest, stop on the second largest, continue one step."""
    s, t, alpha = state.s, state.t, state.alpha
    if s * t <= 0.0:
        raise ValueError(f"s t must be positive, got s={s} t={t}")
    w1 = alpha * s * (2.0 - s)
    w2 = alpha * t
    tw = alpha * t * (-math.log(s * t) + s - 1.0)
    return w1, w2, tw


def _rank_one_margin(p: float, s, size: int) -> np.ndarray:
    """min over admissible t in [p, s] of F / alpha, for each s."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    frac = np.linspace(0.0, 1.0, size)
    s_mesh, frac_mesh = np.meshgrid(s, frac, indexing="ij")
    f, _ = _reduced_gains(s_mesh, p + frac_mesh * (s_mesh - p))
    return f.min(axis=1)


def _rank_one_boundary(p: float, size: int) -> float:
    """Smallest s whose whole t-section lies in the rank-one stopping set."""
    s_grid = np.linspace(p, 1.0, size)
    stop = _rank_one_margin(p, s_grid, size) >= 0.0
    if not stop[-1]:
        raise ConvergenceError(f"rank-one stopping set is empty at p={p}")
    # last grid point outside the set; the set is an upper interval beyond it
    outside = np.flatnonzero(~stop)
    if outside.size == 0:
        return p
    i = int(outside[-1])
    bracket = RootBracket(lo=float(s_grid[i]), hi=float(s_grid[i + 1]))
    return find_root(lambda v: float(_rank_one_margin(p, v, size)[0]), bracket)


def best2_reduction(p: float, size: int = 200) -> float:
    """Threshold on the largest value to which the best-or-second rule reduces.

    Read off the boundary of the rank-one stopping set in (s, t) and mapped back
    through x = (1 - p/s) / q.
    """
    _check_p(p)
    q = 1.0 - p
    s_star = _rank_one_boundary(p, size)
    return max(0.0, (1.0 - p / s_star) / q)


def best2_reduction_check(
    p: float,
    size: int = 100,
    alphas: Sequence[float] = (0.1, 1.0, 10.0),
    tol: float = 1e-10,
    threshold: Optional[float] = None,
) -> Dict[str, float]:
    """Grid evidence that the reduced rule is the best-or-second rule.

    ``threshold`` defaults to :func:`best2_reduction`; passing another cutoff
    checks that one instead.
    """
    _check_p(p)
    q = 1.0 - p
    x_star = best2_reduction(p) if threshold is None else threshold
    s_star = p / (1.0 - q * x_star)
    closed_form, _ = ka_geometric(p)
    # a cutoff above the boundary leaves rank-one stops just below it
    minimal = bool(s_star <= p or _rank_one_margin(p, s_star * (1.0 - 1e-6), size)[0] < 0.0)

    s_lo = np.linspace(p, s_star, size, endpoint=False) if s_star > p else np.array([])
    s, frac = np.meshgrid(s_lo, np.linspace(0.0, 1.0, size), indexing="ij")
    t = p + frac * (s - p)
    _, g_low = _reduced_gains(s, t)
    second_unreachable = bool(np.all(g_low < 0.0))

    s_hi, frac = np.meshgrid(np.linspace(s_star, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
    f_high, _ = _reduced_gains(s_hi, p + frac * (s_hi - p))
    boundary_ok = bool(np.all(f_high >= -tol))

    low = max(1.0 / (1.0 + a) for a in alphas)
    s_c, frac = np.meshgrid(np.linspace(low, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
    t_c = low + frac * (s_c - low)
    f, g = _reduced_gains(s_c, t_c)
    signs = [((a * f) >= 0.0, (a * g) >= 0.0) for a in alphas]
    invariant = all(np.array_equal(signs[0][0], b1) and np.array_equal(signs[0][1], b2) for b1, b2 in signs[1:])

    logger.info(
        "best2_reduction_check p=%g s_star=%.12g second_unreachable=%s boundary_ok=%s alpha_invariant=%s",
        p, s_star, second_unreachable, boundary_ok, invariant,
    )
    return {
        "threshold": x_star,
        "s_star": s_star,
        "second_best_unreachable": second_unreachable,
        "rank_one_boundary": boundary_ok,
        "rank_one_minimal": minimal,
        "alpha_invariant": invariant,
        "closed_form_threshold": closed_form,
        "closed_form_agrees": abs(x_star - closed_form) <= 1e-9,
    }


def second_best_stop_rule(p: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorized rule: stop on a new second largest y under largest x when G >= 0."""
    _check_p(p)
    q = 1.0 - p

    def rule(cur_max: np.ndarray, y: np.ndarray) -> np.ndarray:
        s = p / (1.0 - q * cur_max)
        t = p / (1.0 - q * y)
        _, g = _reduced_gains(s, t)
        return g >= 0.0

    return rule

