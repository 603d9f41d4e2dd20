"""Full-information duration problems on iid uniform values: value grids, threshold
equations and limit constants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from ..numerics import (
    DEFAULT_QUADRATURE,
    Quadrature,
    RootBracket,
    ein,
    exp_integral_tail,
    find_root,
    integrate,
    richardson,
)
from ..schemas import ThresholdSequence

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 2048
MIN_GRID_SIZE = 64

StagePayoffs = Iterable[Tuple[np.ndarray, np.ndarray]]


def w_fidp(x, s: int):
    """Sum_{m=0}^{s-1} x^m, computed in a form that stays accurate at x = 1."""
    if s < 1:
        raise ValueError(f"stages must be >= 1, got {s}")
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("x must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(s * np.log(arr)) / (1.0 - arr)
    out = np.where(arr == 1.0, float(s), np.where(arr == 0.0, 1.0, out))
    return float(out) if np.ndim(x) == 0 else out


def unit_grid(size: int) -> np.ndarray:
    """Breakpoints x = 1 - (1 - u)^3 on a uniform u grid, dense near 1."""
    if size < MIN_GRID_SIZE:
        raise ValueError(f"grid_size must be >= {MIN_GRID_SIZE}, got {size}")
    u = np.linspace(0.0, 1.0, size + 1)
    x = 1.0 - (1.0 - u) ** 3
    x[-1] = 1.0
    return x


@dataclass(frozen=True)
class StageValueGrid:
    """v(x, s) on a shared grid for s = 0..stages (row s), with per-s stopping cutoffs.

    ``thresholds[s-1]`` is the smallest value at which stopping is optimal with s
    stages to go, located by root finding inside its grid cell.
    """

    stages: int
    grid: np.ndarray
    values: np.ndarray
    thresholds: np.ndarray
    normalizer: float = 1.0

    def at(self, x: float, s: int) -> float:
        return float(np.interp(x, self.grid, self.values[s]))

    @property
    def value(self) -> float:
        return float(self.values[self.stages, 0] / self.normalizer)

    def threshold_sequence(self) -> ThresholdSequence:
        return ThresholdSequence(
            index="stages_to_go",
            x={s: float(np.clip(t, 0.0, 1.0)) for s, t in enumerate(self.thresholds, start=1)},
        )


def _suffix(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[::-1])[::-1]


def cell_crossing(grid: np.ndarray, diff: np.ndarray, i: int) -> float:
    """Root of stop - continue inside [grid[i], grid[i+1]], where diff changes sign.

    Brent's method on the cubic through the four nodes around the cell; the
    linear crossing when the cubic does not bracket a root there.
    """
    lo, hi = float(grid[i]), float(grid[i + 1])
    if diff[i + 1] == 0.0:
        return hi
    linear = lo + diff[i] / (diff[i] - diff[i + 1]) * (hi - lo)
    j = min(max(i - 1, 0), grid.size - 4)
    local = Polynomial.fit(grid[j : j + 4], diff[j : j + 4], deg=3)
    if not local(lo) < 0.0 <= local(hi):
        return linear
    return find_root(lambda x: float(local(x)), RootBracket(lo=lo, hi=hi))


def integrate_max(grid: np.ndarray, stop: np.ndarray, stop_tail: np.ndarray, cont: np.ndarray) -> Tuple[np.ndarray, float]:
    """Tail integrals of max(stop, cont) from each node to 1, and the stop/continue crossing.

    Cells where stopping wins on both ends use the exact stop tail; continuation cells use
    the trapezoid rule; a mixed cell is split at the linear-interpolated crossing. The
    reported crossing is refined by :func:`cell_crossing`.
    """
    h = np.diff(grid)
    diff = stop - cont
    is_stop = diff >= 0.0
    left, right = is_stop[:-1], is_stop[1:]
    best = np.maximum(stop, cont)

    cells = 0.5 * h * (cont[:-1] + cont[1:])
    cells = np.where(left & right, stop_tail[:-1] - stop_tail[1:], cells)
    mixed = left != right
    denom = diff[:-1] - diff[1:]
    theta = np.clip(np.divide(diff[:-1], denom, out=np.zeros_like(denom), where=mixed), 0.0, 1.0)
    cross = stop[:-1] + theta * (stop[1:] - stop[:-1])
    split = 0.5 * h * (theta * (best[:-1] + cross) + (1.0 - theta) * (cross + best[1:]))
    cells = np.where(mixed, split, cells)
    tail = np.append(_suffix(cells), 0.0)

    first = np.flatnonzero(is_stop)
    if first.size == 0:
        threshold = 1.0
    elif first[0] == 0:
        threshold = 0.0
    else:
        threshold = cell_crossing(grid, diff, int(first[0]) - 1)
    return tail, threshold


def grid_backward_induction(grid: np.ndarray, payoffs: StagePayoffs, survival: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """V_k(x) = x r_k V_{k+1}(x) + int_x^1 max{S_k(y), r_k V_{k+1}(y)} dy, V_{n+1} = 0.

    ``payoffs`` yields (S_k, int_x^1 S_k) at the nodes for k = n, n-1, ..., 1 and
    ``survival[k-1]`` is r_k = P(N >= k+1 | N >= k). Row s of the result is V at
    stage n - s + 1.
    """
    n = survival.size
    values = np.zeros((n + 1, grid.size))
    thresholds = np.zeros(n)
    for s, (stop, stop_tail) in enumerate(payoffs, start=1):
        k = n - s + 1
        cont = survival[k - 1] * values[s - 1]
        tail, thresholds[s - 1] = integrate_max(grid, stop, stop_tail, cont)
        values[s] = grid * cont + tail
    return values, thresholds


def extrapolated_induction(
    grid_size: int,
    make_payoffs: Callable[[np.ndarray], StagePayoffs],
    survival: np.ndarray,
    extrapolate: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the induction on a grid and its refinement and combine them on the coarse nodes."""
    coarse = unit_grid(grid_size)
    values, thresholds = grid_backward_induction(coarse, make_payoffs(coarse), survival)
    if not extrapolate:
        return coarse, values, thresholds
    fine = unit_grid(2 * grid_size)
    fine_values, fine_thresholds = grid_backward_induction(fine, make_payoffs(fine), survival)
    return coarse, richardson(values, fine_values[:, ::2]), fine_thresholds


# ---------------------------------------------------------------------------
# stage payoffs, indexed by stages to go s = 1..n


def fidp_payoffs(grid: np.ndarray, n: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """S = sum_{m<s} y^m and its tail sum_{j<=s} (1 - x^j)/j."""
    stop = np.zeros_like(grid)
    tail = np.zeros_like(grid)
    power = np.ones_like(grid)
    for s in range(1, n + 1):
        stop = stop + power
        power = power * grid
        tail = tail + (1.0 - power) / s
        yield stop, tail


def bcdp_payoffs(grid: np.ndarray, n: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """S = s y^{s-1} (duration s when y is the overall maximum) and its tail 1 - x^s."""
    power = np.ones_like(grid)
    for s in range(1, n + 1):
        stop = s * power
        power = power * grid
        yield stop, 1.0 - power


def _fixed_survival(n: int) -> np.ndarray:
    survival = np.ones(n)
    survival[-1] = 0.0
    return survival


# ---------------------------------------------------------------------------
# value grids


def fidp_value(n: int, grid_size: int = DEFAULT_GRID_SIZE, extrapolate: bool = True) -> StageValueGrid:
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    grid, values, thresholds = extrapolated_induction(
        grid_size, lambda g: fidp_payoffs(g, n), _fixed_survival(n), extrapolate
    )
    logger.info("fidp_value n=%d grid=%d value=%.12g", n, grid_size, values[n, 0] / n)
    return StageValueGrid(stages=n, grid=grid, values=values, thresholds=thresholds, normalizer=float(n))


def bcdp_value(n: int, grid_size: int = DEFAULT_GRID_SIZE, extrapolate: bool = True) -> StageValueGrid:
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    grid, values, thresholds = extrapolated_induction(
        grid_size, lambda g: bcdp_payoffs(g, n), _fixed_survival(n), extrapolate
    )
    logger.info("bcdp_value n=%d grid=%d value=%.12g", n, grid_size, values[n, 0] / n)
    return StageValueGrid(stages=n, grid=grid, values=values, thresholds=thresholds, normalizer=float(n))


def _recall_induction(grid: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    # R_s(x) = max{S_s(x), x R_{s-1}(x) + int_x^1 R_{s-1}}, holding the running maximum x
    values = np.zeros((n + 1, grid.size))
    thresholds = np.zeros(n)
    held = np.zeros_like(grid)
    held_tail = np.zeros_like(grid)
    for s, (stop, stop_tail) in enumerate(fidp_payoffs(grid, n), start=1):
        cont = grid * held + held_tail
        held_tail, thresholds[s - 1] = integrate_max(grid, stop, stop_tail, cont)
        held = np.maximum(stop, cont)
        values[s] = held
    return values, thresholds


def fidp_recall_value(n: int, grid_size: int = DEFAULT_GRID_SIZE, extrapolate: bool = True) -> Tuple[float, StageValueGrid]:
    """Optimal normalized payoff with recall, and R(x, s) on the grid."""
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    coarse = unit_grid(grid_size)
    values, thresholds = _recall_induction(coarse, n)
    value = _first_draw_mean(coarse, values[n])
    if extrapolate:
        fine = unit_grid(2 * grid_size)
        fine_values, thresholds = _recall_induction(fine, n)
        value = float(richardson(np.array(value), np.array(_first_draw_mean(fine, fine_values[n]))))
        values = richardson(values, fine_values[:, ::2])
    logger.info("fidp_recall_value n=%d grid=%d value=%.12g", n, grid_size, value / n)
    table = StageValueGrid(stages=n, grid=coarse, values=values, thresholds=thresholds, normalizer=float(n))
    return value / n, table


def _first_draw_mean(grid: np.ndarray, held: np.ndarray) -> float:
    return float(np.sum(0.5 * np.diff(grid) * (held[:-1] + held[1:])))


# ---------------------------------------------------------------------------
# threshold equations


def _eqn_fidp(x: float, s: int) -> float:
    i = np.arange(1, s + 1)
    powers = x ** i
    tails = np.cumsum((1.0 - powers) / i)
    lhs = np.sum(x ** (i - 1))
    # sum_{i=1}^{s-1} x^{i-1} sum_{j=1}^{s-i} (1 - x^j)/j
    rhs = np.sum(x ** (i[: s - 1] - 1) * tails[s - 2 :: -1]) if s > 1 else 0.0
    return float(lhs - rhs)


def fidp_threshold(s: int) -> float:
    """Root of the one-step look-ahead equation with s stages to go, floored at 0."""
    if s < 1:
        raise ValueError(f"stages must be >= 1, got {s}")
    if s <= 2:
        return 0.0
    root = find_root(lambda x: _eqn_fidp(x, s), RootBracket(lo=0.0, hi=1.0))
    return max(0.0, root)


def fidp_recall_threshold(s: int) -> float:
    """Root of sum_{j=1}^{s-1} (1 - x^j)/j = 1; 0 when the sum never exceeds 1."""
    if s < 1:
        raise ValueError(f"stages must be >= 1, got {s}")
    j = np.arange(1, s)
    g = lambda x: float(np.sum((1.0 - x**j) / j) - 1.0)
    if s <= 2 or g(0.0) <= 0.0:
        return 0.0
    return find_root(g, RootBracket(lo=0.0, hi=1.0))


def bcdp_threshold(s: int) -> float:
    """Root of sum_{j=1}^{s-1} x^{j-1} = s x^{s-1}."""
    if s < 1:
        raise ValueError(f"stages must be >= 1, got {s}")
    if s == 1:
        return 0.0
    j = np.arange(1, s)
    return find_root(lambda x: float(s * x ** (s - 1) - np.sum(x ** (j - 1))), RootBracket(lo=0.0, hi=1.0))


def threshold_sequence(fn: Callable[[int], float], n: int) -> ThresholdSequence:
    return ThresholdSequence(index="stages_to_go", x={s: fn(s) for s in range(1, n + 1)})


def stage_cutoffs(fn: Callable[[int], float], n: int) -> list:
    """Cutoffs ordered by stage k = 1..N, where stage k has N - k + 1 stages to go."""
    return [fn(n - k + 1) for k in range(1, n + 1)]


# ---------------------------------------------------------------------------
# limit constants


def asymptotic_z(q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Root z of int_0^z e^t (1 - Ein(t)) dt = 0, where 1 - x_s ~ z / s."""
    f = lambda z: integrate(lambda t: math.exp(t) * (1.0 - ein(t, q)), 0.0, z, q)
    return find_root(f, RootBracket(lo=1.0, hi=3.0, tol=1e-10))


def asymptotic_recall_z(q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Root z of Ein(z) = 1, the recall analogue of asymptotic_z."""
    return find_root(lambda z: ein(z, q) - 1.0, RootBracket(lo=1.0, hi=2.0, tol=1e-10))


def fidp_limit_constant(z: float | None = None, q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Limit of the optimal normalized payoff, from the double-integral formula in z."""
    z = asymptotic_z(q) if z is None else z
    ez = math.exp(z)
    k_z = integrate(lambda t: math.expm1(z * t) / t if t > 0 else z, 0.0, 1.0, q)

    def inner(u: float) -> float:
        # u * int_0^1 e^{zt}/(1 - ut) dt with the 1/(1 - t) singularity at u = 1 split off
        smooth = integrate(lambda t: (math.exp(z * t) - ez) / (1.0 - u * t), 0.0, 1.0, q)
        return u * smooth - ez * math.log1p(-u)

    def outer(u: float) -> float:
        if u <= 0.0:
            return 0.0
        weight = math.exp(-z / u)
        return 0.0 if weight == 0.0 else weight * (k_z - 1.0 + inner(u))

    return integrate(outer, 0.0, 1.0, q)


def bcdp_limit_c(q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Root of e^c = 1 + 2c in (1, 3)."""
    return find_root(lambda c: math.exp(c) - 1.0 - 2.0 * c, RootBracket(lo=1.0, hi=3.0))


def bcdp_limit_value(q: Quadrature = DEFAULT_QUADRATURE) -> float:
    c = bcdp_limit_c(q)

    def outer(x: float) -> float:
        if x <= 0.0:
            return 1.0
        inner = integrate(lambda y: math.exp(-c * x / (1.0 - y)) if y < 1.0 else 0.0, 0.0, x, q)
        return inner / x

    second = integrate(lambda y: y * math.exp(-c / y) if y > 0.0 else 0.0, 0.0, 1.0, q)
    return integrate(outer, 0.0, 1.0, q) - 2.0 * second


def bcdp_recall_limit_value(q: Quadrature = DEFAULT_QUADRATURE) -> float:
    c = math.log(2.0)
    return (1.0 - c) / 2.0 + c**2 * exp_integral_tail(c, q)
