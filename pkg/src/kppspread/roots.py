"""Scalar root finding: bracket expansion and safeguarded Newton/bisection."""
from __future__ import annotations

import math
from typing import Callable


class BracketError(RuntimeError):
    """No sign change could be found."""


def expand_bracket(f: Callable[[float], float], lo: float, hi: float,
                   max_doublings: int = 200) -> tuple[float, float, float, float]:
    """Grow [lo, hi] geometrically until f changes sign across it.

    Returns (lo, hi, f(lo), f(hi)).
    """
    flo, fhi = f(lo), f(hi)
    width = max(hi - lo, 1.0)
    n = 0
    while flo * fhi > 0:
        if n >= max_doublings:
            raise BracketError(f"no sign change after {max_doublings} doublings")
        # move the endpoint whose value is further from zero in the wrong direction
        if abs(flo) < abs(fhi):
            lo -= width
            flo = f(lo)
        else:
            hi += width
            fhi = f(hi)
        width *= 2.0
        n += 1
    return lo, hi, flo, fhi


def safe_newton(fdf: Callable[[float], tuple[float, float]], lo: float, hi: float,
                ftol: float = 1e-13, maxiter: int = 200,
                flo: float | None = None, fhi: float | None = None) -> float:
    """Newton iteration kept inside a shrinking bracket; bisect when Newton misbehaves.

    ``fdf(x)`` returns ``(f(x), f'(x))``. The bracket must contain a sign change.
    Stops when |f| <= ftol or the bracket has collapsed to a few ulps.
    """
    if flo is None:
        flo = fdf(lo)[0]
    if fhi is None:
        fhi = fdf(hi)[0]
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"f({lo})={flo} and f({hi})={fhi} have the same sign")
    # orient so that f(xl) < 0 < f(xh)
    xl, xh = (lo, hi) if flo < 0 else (hi, lo)
    x = 0.5 * (lo + hi)
    dxold = abs(hi - lo)
    dx = dxold
    f, df = fdf(x)
    for _ in range(maxiter):
        if abs(f) <= ftol:
            return x
        if (((x - xh) * df - f) * ((x - xl) * df - f) > 0
                or abs(2.0 * f) > abs(dxold * df)):
            dxold = dx
            dx = 0.5 * (xh - xl)
            x = xl + dx
        else:
            dxold = dx
            dx = f / df
            x -= dx
        if (abs(dx) <= 2 * math.ulp(abs(x) + 1e-300)
                or abs(xh - xl) <= 4 * math.ulp(max(abs(xl), abs(xh), 1e-300))):
            return x
        f, df = fdf(x)
        if f < 0:
            xl = x
        else:
            xh = x
    return x
