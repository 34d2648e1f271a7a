"""Derivative-free root finding used by the attack and key-rate solvers."""

from __future__ import annotations

import math
from typing import Callable

__all__ = ["NoRootError", "bisect", "expand_bracket", "first_sign_change"]

MAX_ITER = 200
RESIDUAL_TOL = 1e-9


class NoRootError(ValueError):
    """Raised when a bracket does not enclose a sign change."""


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    tol: float = RESIDUAL_TOL,
    xtol: float = 0.0,
    max_iter: int = MAX_ITER,
) -> float:
    """Bisection on ``[lo, hi]``.

    Iterates until the bracket collapses to adjacent floats (or ``xtol``), or
    ``max_iter`` halvings.  The returned point is the bracket end with the
    smaller residual, which must satisfy ``|f(x)| < tol``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if math.copysign(1, flo) == math.copysign(1, fhi):
        raise NoRootError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if math.copysign(1, fm) == math.copysign(1, flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    x, fx = (lo, flo) if abs(flo) <= abs(fhi) else (hi, fhi)
    if not abs(fx) < tol:
        raise NoRootError(f"bisection stalled at x={x} with residual {fx:.3g}")
    return x


def expand_bracket(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    limit: float,
    factor: float = 2.0,
) -> tuple[float, float]:
    """Grow ``hi`` geometrically until ``f`` changes sign or ``limit`` is hit.

    Requires ``0 < hi``; the returned pair is the last cell searched.
    """
    if not hi > 0:
        raise ValueError("expand_bracket needs a positive upper end")
    flo = f(lo)
    while True:
        fhi = f(hi)
        if math.copysign(1, fhi) != math.copysign(1, flo) or fhi == 0:
            return lo, hi
        if hi >= limit:
            raise NoRootError(f"no sign change below {limit}")
        lo, flo = hi, fhi
        hi = min(limit, hi * factor)


def first_sign_change(f: Callable[[float], float], grid) -> tuple[float, float] | None:
    """Return the first grid cell ``(a, b)`` on which ``f`` changes sign."""
    prev_x = None
    prev_f = None
    for x in grid:
        fx = f(x)
        if fx == 0:
            return x, x
        if prev_f is not None and math.copysign(1, fx) != math.copysign(1, prev_f):
            return prev_x, x
        prev_x, prev_f = x, fx
    return None
