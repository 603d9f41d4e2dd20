"""Special functions, root finding, series truncation and quadrature shared by the solvers."""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate as sp_integrate
from scipy import optimize, special

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
DEFAULT_ROOT_TOL = 1e-12
DEFAULT_MAX_ITER = 200


class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot deliver a result to the requested accuracy."""


class NoSignChangeError(NumericalError):
    """Raised when a root bracket does not straddle a sign change."""


class ConvergenceError(NumericalError):
    """Raised when an iterative routine exhausts its iteration budget."""


class QuadratureError(NumericalError):
    """Raised when adaptive quadrature hits its subdivision limit or fails outright."""


class RootBracket(BaseModel):
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    tol: float = DEFAULT_ROOT_TOL

    @model_validator(mode="after")
    def _validate_bracket(self) -> "RootBracket":
        if not self.lo < self.hi:
            raise ValueError(f"bracket lo={self.lo} must be below hi={self.hi}")
        if self.tol <= 0:
            raise ValueError("bracket tol must be positive")
        return self


class Quadrature(BaseModel):
    model_config = ConfigDict(frozen=True)

    abs_tol: float = 1e-11
    max_subdivisions: int = 200

    @model_validator(mode="after")
    def _validate_quadrature(self) -> "Quadrature":
        if self.abs_tol <= 0:
            raise ValueError("quadrature abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("quadrature max_subdivisions must be at least 1")
        return self


DEFAULT_QUADRATURE = Quadrature()


def _require_positive(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError(f"{name} requires x > 0, got {x!r}")
    return arr


def _as_output(arr: np.ndarray, like) -> float | np.ndarray:
    return float(arr) if np.ndim(like) == 0 else arr


def digamma(x):
    """Logarithmic derivative of the gamma function, for x > 0 (scalar or array)."""
    arr = _require_positive(x, "digamma")
    return _as_output(special.digamma(arr), x)


def trigamma(x):
    arr = _require_positive(x, "trigamma")
    return _as_output(special.polygamma(1, arr), x)


def harmonic(n):
    """H_n = sum_{j=1}^n 1/j, with H_0 = 0. Accepts integer arrays."""
    arr = np.asarray(n)
    if np.any(arr < 0):
        raise ValueError(f"harmonic requires n >= 0, got {n!r}")
    out = special.digamma(arr.astype(float) + 1.0) + EULER_GAMMA
    return _as_output(out, n)


def harmonic_table(n: int) -> np.ndarray:
    """Array h with h[m] = H_m for m = 0..n, summed exactly in index order."""
    h = np.zeros(n + 1)
    if n > 0:
        h[1:] = np.cumsum(1.0 / np.arange(1, n + 1))
    return h


def find_root(f: Callable[[float], float], bracket: RootBracket, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Brent's method on a validated bracket; the root never leaves [lo, hi]."""
    f_lo, f_hi = f(bracket.lo), f(bracket.hi)
    if f_lo == 0.0:
        return bracket.lo
    if f_hi == 0.0:
        return bracket.hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoSignChangeError(
            f"no sign change on [{bracket.lo}, {bracket.hi}]: f(lo)={f_lo:.6g} f(hi)={f_hi:.6g}"
        )
    root, info = optimize.brentq(
        f, bracket.lo, bracket.hi, xtol=bracket.tol, maxiter=max_iter, full_output=True, disp=False
    )
    if not info.converged:
        raise ConvergenceError(f"root not converged after {info.iterations} iterations: {info.flag}")
    logger.debug("find_root lo=%g hi=%g root=%.15g iterations=%d", bracket.lo, bracket.hi, root, info.iterations)
    return float(min(max(root, bracket.lo), bracket.hi))


def integrate(f: Callable[[float], float], a: float, b: float, q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Adaptive Gauss-Kronrod quadrature of f over [a, b] to absolute tolerance q.abs_tol."""
    if a > b:
        raise ValueError(f"integrate requires a <= b, got a={a} b={b}")
    if a == b:
        return 0.0
    out = sp_integrate.quad(f, a, b, epsabs=q.abs_tol, epsrel=0.0, limit=q.max_subdivisions, full_output=1)
    value, abserr, info = out[0], out[1], out[2]
    if len(out) > 3:
        if _is_roundoff(out[3]):
            # estimate is as good as binary64 allows
            logger.debug("integrate roundoff a=%g b=%g abserr=%.3g", a, b, abserr)
        else:
            raise QuadratureError(
                f"quadrature failed on [{a}, {b}] after {info['last']} subdivisions "
                f"(limit {q.max_subdivisions}): {out[3]}"
            )
    return float(value)


def _is_roundoff(message: str) -> bool:
    return message.startswith("The occurrence of roundoff error") or "Roundoff error is detected" in message


def tail_truncation_point(bound: Callable[[float], float], tol: float, start: float = 1.0) -> float:
    """Smallest doubling point T >= start whose computed tail bound is below tol."""
    t = max(start, 1.0)
    for _ in range(200):
        if bound(t) < tol:
            return t
        t *= 2.0
    raise ConvergenceError(f"tail bound never fell below {tol}")


def integrate_to_infinity(
    f: Callable[[float], float],
    a: float,
    tail_bound: Callable[[float], float],
    q: Quadrature = DEFAULT_QUADRATURE,
) -> float:
    """Integral of f over [a, inf) truncated where tail_bound(T) < abs_tol / 10.

    tail_bound(T) must bound the absolute integral of f over [T, inf).
    """
    t = tail_truncation_point(tail_bound, q.abs_tol / 10.0, start=max(a + 1.0, 1.0))
    pieces = [a]
    while pieces[-1] < t:
        pieces.append(min(t, max(2.0 * pieces[-1], pieces[-1] + 1.0)))
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        total += integrate(f, lo, hi, q)
    logger.debug("integrate_to_infinity a=%g truncation=%g pieces=%d", a, t, len(pieces) - 1)
    return total


def series_cutoff(bound: Callable[[int], float], tol: float, start: int = 1) -> int:
    """Smallest J >= start with bound(J) < tol, for a non-increasing remainder bound."""
    hi = max(start, 1)
    while bound(hi) >= tol:
        hi *= 2
        if hi > 1 << 60:
            raise ConvergenceError(f"series remainder bound never fell below {tol}")
    lo = max(start, 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if bound(mid) < tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def ein(t: float, q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Entire exponential integral: integral of (1 - e^{-u})/u over [0, t]."""
    if t < 0:
        raise ValueError(f"ein requires t >= 0, got {t}")
    return integrate(_ein_integrand, 0.0, t, q)


def _ein_integrand(u: float) -> float:
    if u == 0.0:
        return 1.0
    return -math.expm1(-u) / u


def exp_integral_tail(c: float, q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """I(c) = integral of e^{-ct}/t over [1, inf), by truncated quadrature."""
    if c <= 0:
        raise ValueError(f"exp_integral_tail requires c > 0, got {c}")
    return integrate_to_infinity(
        lambda t: math.exp(-c * t) / t,
        1.0,
        lambda big_t: math.exp(-c * big_t) / (c * big_t),
        q,
    )


def richardson(coarse: np.ndarray, fine: np.ndarray, order: int = 2) -> np.ndarray:
    """Extrapolate two estimates whose error scales like h**order, fine using h/2."""
    factor = 2.0**order
    return (factor * fine - coarse) / (factor - 1.0)
