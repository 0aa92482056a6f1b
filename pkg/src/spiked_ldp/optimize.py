"""Small one-dimensional optimizers used by the rate-function inner problems."""
from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section search for the maximum of a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, f(x))``. The endpoints are compared against the interior
    result so a monotone ``f`` still yields the correct boundary maximizer.
    """
    if b < a:
        raise ValueError("empty bracket")
    fa, fb = f(a), f(b)
    if b - a <= tol:
        return (a, fa) if fa >= fb else (b, fb)
    lo, hi = a, b
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
    best = max(((x1, f1), (x2, f2), (a, fa), (b, fb)), key=lambda p: p[1])
    return best
