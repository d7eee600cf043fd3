"""Bracketed one-dimensional searches for convex (or concave) functions.

The engine is scipy's bounded Brent method; this module adds what the
nested saddle solvers need on top of it: geometric expansion of open upper
ends, endpoint checks for closed ends (Brent never evaluates the bounds),
and a per-call memo so repeated probes are free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy.optimize import minimize_scalar

from .errors import BracketError, DomainError

GROWTH = 4.0
MAX_GROWTH = 1e3
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class Bracket:
    """Search interval. An open ``hi`` is an initial cap that may be expanded;
    an open ``lo`` is an excluded limit that is never evaluated."""

    lo: float
    hi: float
    open_lo: bool = False
    open_hi: bool = False

    def __post_init__(self):
        if not (self.lo < self.hi) or math.isnan(self.lo) or math.isnan(self.hi):
            raise DomainError(f"invalid bracket [{self.lo}, {self.hi}]")


class _Memo:
    __slots__ = ("f", "cache")

    def __init__(self, f):
        self.f = f
        self.cache = {}

    def __call__(self, x):
        x = float(x)
        v = self.cache.get(x)
        if v is None:
            v = float(self.f(x))
            if math.isnan(v):
                raise DomainError(f"objective returned NaN at {x}")
            self.cache[x] = v
        return v


def _expand(f, lo, hi, max_growth):
    width0 = hi - lo
    while True:
        mid = lo + 0.5 * (hi - lo)
        if f(mid) <= f(hi):
            return hi
        if (hi - lo) * GROWTH > max_growth * width0:
            raise BracketError(f"minimiser beyond {hi - lo:g} after expanding a bracket of width {width0:g}")
        hi = lo + GROWTH * (hi - lo)


def minimize_convex_1d(
    f: Callable[[float], float],
    b: Bracket,
    tol: float = DEFAULT_TOL,
    max_growth: float = MAX_GROWTH,
) -> tuple[float, float]:
    """Return ``(x, f(x))`` with ``x`` within about ``tol`` of the minimiser."""
    fm = _Memo(f)
    lo, hi = float(b.lo), float(b.hi)
    if b.open_hi:
        hi = _expand(fm, lo, hi, max_growth)
    res = minimize_scalar(fm, bounds=(lo, hi), method="bounded", options={"xatol": tol, "maxiter": 2000})
    best_x, best_f = float(res.x), float(res.fun)
    ends = []
    if not b.open_lo:
        ends.append(lo)
    if not b.open_hi:
        ends.append(hi)
    for x in ends:
        v = fm(x)
        if v < best_f or (v == best_f and abs(x - best_x) <= tol):
            best_x, best_f = x, v
    return best_x, best_f


def maximize_concave_1d(
    f: Callable[[float], float],
    b: Bracket,
    tol: float = DEFAULT_TOL,
    max_growth: float = MAX_GROWTH,
) -> tuple[float, float]:
    x, v = minimize_convex_1d(lambda t: -f(t), b, tol, max_growth)
    return x, -v
