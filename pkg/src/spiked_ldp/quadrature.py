"""Adaptive Gauss-Legendre quadrature with an optional arccos edge substitution.

Integrands are evaluated vectorized: ``f`` receives a 1-D array of nodes and
must return an array of the same shape.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureSpec", "QuadratureError", "integrate", "integrate_edges", "DEFAULT_QUAD"]


class QuadratureError(RuntimeError):
    """Raised when the panel budget is exhausted before reaching tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    tol: float = 1e-10
    max_panels: int = 4000
    edge_substitution: bool = True
    order: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        if self.max_panels < 16:
            raise ValueError("max_panels must be at least 16")


DEFAULT_QUAD = QuadratureSpec()


@lru_cache(maxsize=None)
def _rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x2, w2 = np.polynomial.legendre.leggauss(2 * order)
    return x, w, x2, w2


def _panel(f, a: float, b: float, order: int):
    x, w, x2, w2 = _rule(order)
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    coarse = half * np.dot(w, f(mid + half * x))
    fine = half * np.dot(w2, f(mid + half * x2))
    return fine, abs(fine - coarse)


def integrate(f, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUAD,
              initial_panels: int = 4, breakpoints=()) -> float:
    """Globally adaptive integral of ``f`` over ``[a, b]``.

    Panels are split at the one with the largest error estimate until the
    summed estimate drops below ``spec.tol``. ``breakpoints`` seeds panel edges
    at known kinks.
    """
    if b < a:
        return -integrate(f, b, a, spec, initial_panels, breakpoints)
    if b == a:
        return 0.0
    edges = np.linspace(a, b, initial_panels + 1)
    if breakpoints:
        extra = [p for p in breakpoints if a < p < b]
        edges = np.unique(np.concatenate([edges, extra]))
    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = _panel(f, lo, hi, spec.order)
        heapq.heappush(heap, (-e, lo, hi, val))
        total += val
        err += e
    while err > spec.tol:
        if len(heap) >= spec.max_panels:
            raise QuadratureError(
                f"panel budget {spec.max_panels} exhausted on [{a}, {b}] (error {err:.3e})")
        neg_e, lo, hi, val = heapq.heappop(heap)
        # stop splitting once panels reach floating-point resolution
        if hi - lo <= 64 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)):
            heapq.heappush(heap, (0.0, lo, hi, val))
            err += neg_e
            if all(item[0] == 0.0 for item in heap):
                break
            continue
        mid = 0.5 * (lo + hi)
        v1, e1 = _panel(f, lo, mid, spec.order)
        v2, e2 = _panel(f, mid, hi, spec.order)
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
    # re-sum to shed accumulated rounding from the running updates
    return float(sum(item[3] for item in heap))


def integrate_edges(f, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integrate over ``[a, b]`` an integrand with square-root or logarithmic
    behaviour at the edges.

    ``f(t, left, right)`` receives the nodes together with the gaps ``t - a``
    and ``b - t``, computed without cancellation so that edge logarithms stay
    finite. With ``spec.edge_substitution`` set, ``t = c - h cos(phi)`` maps
    the interval to ``phi in [0, pi]``; the Jacobian ``h sin(phi)`` cancels
    inverse-square-root edges and smooths square-root ones.
    """
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    if not spec.edge_substitution:
        return integrate(lambda t: f(t, t - a, b - t), a, b, spec)

    def g(phi):
        left = 2.0 * h * np.sin(0.5 * phi) ** 2
        right = 2.0 * h * np.cos(0.5 * phi) ** 2
        return f(c - h * np.cos(phi), left, right) * (h * np.sin(phi))

    return integrate(g, 0.0, np.pi, spec)
