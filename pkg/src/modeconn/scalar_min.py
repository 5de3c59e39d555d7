"""One-dimensional minimization: coarse bracketing scan, then golden-section
refinement with guarded parabolic steps (Brent-style)."""

from __future__ import annotations

import math

_GOLDEN = 0.381966011250105097  # 2 - phi


def _safe(f, x: float) -> float:
    v = f(x)
    if v is None or not math.isfinite(v):
        return math.inf
    return float(v)


def brent_minimize(f, a: float, b: float, tol: float = 1e-8,
                   max_iter: int = 200) -> tuple[float, float]:
    """Local minimum of f on [a, b]; returns (x, f(x)).

    Classic golden-section iteration with parabolic acceleration.  Non-finite
    evaluations are treated as +inf, which keeps the bracket shrinking away
    from them.
    """
    if a > b:
        a, b = b, a
    x = a + _GOLDEN * (b - a)
    fx = _safe(f, x)
    x_sec, f_sec = x, fx
    x_trd, f_trd = x, fx
    d = e = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        tol1 = 1e-11 * abs(x) + tol
        tol2 = 2.0 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            # parabola through the three best points
            r = (x - x_sec) * (fx - f_trd)
            q = (x - x_trd) * (fx - f_sec)
            p = (x - x_trd) * q - (x - x_sec) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev, e = e, d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                xn = x + d
                if xn - a < tol2 or b - xn < tol2:
                    d = tol1 if x < mid else -tol1
                use_golden = False
        if use_golden:
            e = (b - x) if x < mid else (a - x)
            d = _GOLDEN * e
        xn = x + d if abs(d) >= tol1 else x + (tol1 if d > 0 else -tol1)
        fn = _safe(f, xn)
        if fn <= fx:
            if xn >= x:
                a = x
            else:
                b = x
            x_trd, f_trd = x_sec, f_sec
            x_sec, f_sec = x, fx
            x, fx = xn, fn
        else:
            if xn < x:
                a = xn
            else:
                b = xn
            if fn <= f_sec or x_sec == x:
                x_trd, f_trd = x_sec, f_sec
                x_sec, f_sec = xn, fn
            elif fn <= f_trd or x_trd == x or x_trd == x_sec:
                x_trd, f_trd = xn, fn
    return x, fx


def minimize_on_grid(f, grid, tol: float = 1e-8) -> tuple[float, float]:
    """Scan the grid, then refine around the best point.

    The bracket is the pair of grid neighbours of the best scan point, so a
    minimum at a grid boundary is returned as that boundary when nothing
    inside the final interval beats it.  Returns (x, f(x)); f(x) is +inf
    when every evaluation was non-finite.
    """
    grid = list(grid)
    if len(grid) < 2:
        raise ValueError("grid needs at least two points")
    vals = [_safe(f, x) for x in grid]
    i = min(range(len(grid)), key=lambda j: (vals[j], j))
    if not math.isfinite(vals[i]):
        return grid[i], math.inf
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if lo == hi:
        return grid[i], vals[i]
    x, fx = brent_minimize(f, lo, hi, tol=tol)
    if vals[i] <= fx:
        return grid[i], vals[i]
    return x, fx
