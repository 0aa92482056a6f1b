"""Compactly supported spectral laws and their transforms to the right of the support.

Closed forms are used for the semicircle and Marchenko-Pastur laws; generic
densities go through edge-aware quadrature. All evaluation points must lie at
or to the right of the right edge ``r(mu)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_edges

__all__ = [
    "INFINITE", "DomainError", "SpectralMeasure", "semicircle", "marchenko_pastur", "generic",
    "from_csv", "support_right", "mean", "integrate", "stieltjes", "stieltjes_quad",
    "stieltjes_derivative", "stieltjes_edge", "k_inverse", "r_transform",
    "log_potential", "log_potential_quad",
]

#: Marker for divergent values (edge limits, out-of-domain rates).
INFINITE = math.inf


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


@dataclass(frozen=True)
class SpectralMeasure:
    kind: str
    support: tuple[float, float]
    alpha: Optional[float] = None
    density_fn: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise DomainError(f"support must satisfy a < b, got {self.support}")
        if self.kind not in ("semicircle", "marchenko_pastur", "generic"):
            raise DomainError(f"unknown measure kind {self.kind!r}")
        if self.kind == "generic" and self.density_fn is None:
            raise DomainError("generic measure needs a density")

    @property
    def left(self) -> float:
        return self.support[0]

    @property
    def right(self) -> float:
        return self.support[1]

    def density(self, t, left=None, right=None):
        """Density at ``t``; ``left``/``right`` are optional exact gaps to the edges."""
        t = np.asarray(t, dtype=float)
        a, b = self.support
        left = t - a if left is None else np.asarray(left, dtype=float)
        right = b - t if right is None else np.asarray(right, dtype=float)
        inside = (left >= 0) & (right >= 0)
        gap = np.where(inside, left * right, 0.0)
        if self.kind == "semicircle":
            return np.sqrt(gap) / (2 * np.pi)
        if self.kind == "marchenko_pastur":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.sqrt(gap) / (2 * np.pi * self.alpha * t)
            return np.where(inside & (t > 0), out, 0.0)
        return np.where(inside, self.density_fn(np.clip(t, a, b)), 0.0)


def semicircle() -> SpectralMeasure:
    return SpectralMeasure("semicircle", (-2.0, 2.0))


def marchenko_pastur(alpha: float, support: Optional[tuple[float, float]] = None) -> SpectralMeasure:
    """Limit law of ``Y Y*`` for an ``M x N`` matrix with variance ``1/N``
    entries and ``M/N -> alpha``.

    ``support`` may be injected to use a different edge convention; the
    closed-form transforms always assume the standard edges
    ``(1 -/+ sqrt(alpha))**2``.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if support is None:
        support = ((1 - math.sqrt(alpha)) ** 2, (1 + math.sqrt(alpha)) ** 2)
    return SpectralMeasure("marchenko_pastur", tuple(map(float, support)), alpha=float(alpha))


def generic(density: Callable, a: float, b: float, normalize: bool = True,
            quad: QuadratureSpec = DEFAULT_QUAD) -> SpectralMeasure:
    """Measure with a user density on ``[a, b]``, rescaled to unit mass by default."""
    mu = SpectralMeasure("generic", (float(a), float(b)), density_fn=density)
    if normalize:
        mass = integrate(mu, lambda t, l, r: np.ones_like(t), quad)
        if not mass > 0:
            raise DomainError("density has no mass on its support")
        mu = SpectralMeasure("generic", mu.support,
                             density_fn=lambda t, _f=density, _m=mass: _f(t) / _m)
    return mu


def from_csv(path) -> SpectralMeasure:
    """Read a sampled density, two columns ``t, density(t)``.

    Samples are joined by a monotone cubic (PCHIP) interpolant: it keeps the
    density non-negative and is smooth enough for the adaptive quadrature,
    which stalls on the slope jumps of a piecewise-linear fit.
    """
    ts, ps = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError:
                continue  # header line
            ts.append(t)
            ps.append(p)
    if len(ts) < 2:
        raise DomainError(f"{path}: need at least two density samples")
    order = np.argsort(ts)
    ts = np.asarray(ts)[order]
    ps = np.asarray(ps)[order]
    if np.any(ps < 0):
        raise DomainError(f"{path}: density must be non-negative")
    if np.any(np.diff(ts) <= 0):
        raise DomainError(f"{path}: sample points must be distinct")
    fit = PchipInterpolator(ts, ps, extrapolate=False)
    return generic(lambda t: np.nan_to_num(fit(t)), ts[0], ts[-1])


# ---------------------------------------------------------------------------
# integration against a measure

def integrate(mu: SpectralMeasure, f, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``∫ f dmu`` where ``f(t, left_gap, right_gap)`` is vectorized."""
    a, b = mu.support

    def integrand(t, left, right):
        return f(t, left, right) * mu.density(t, left, right)

    return integrate_edges(integrand, a, b, quad)


def support_right(mu: SpectralMeasure) -> float:
    return mu.right


def mean(mu: SpectralMeasure, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    if mu.kind == "semicircle":
        return 0.0
    if mu.kind == "marchenko_pastur" and mu.support == marchenko_pastur(mu.alpha).support:
        return 1.0
    return integrate(mu, lambda t, l, r: t, quad)


def _closed_form(mu: SpectralMeasure) -> bool:
    # an injected non-standard MP support falls back to quadrature
    if mu.kind == "semicircle":
        return mu.support == (-2.0, 2.0)
    if mu.kind == "marchenko_pastur":
        return mu.support == marchenko_pastur(mu.alpha).support
    return False


def _check_right(mu: SpectralMeasure, z: float, strict: bool):
    r = mu.right
    if (z <= r) if strict else (z < r):
        rel = "to the right of" if strict else "at or to the right of"
        raise DomainError(f"point {z} must lie {rel} the support edge {r}")


# ---------------------------------------------------------------------------
# Stieltjes transform and its inverse

def stieltjes(mu: SpectralMeasure, z: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``G_mu(z) = ∫ dmu(t) / (z - t)`` for real ``z > r(mu)``."""
    z = float(z)
    _check_right(mu, z, strict=True)
    if _closed_form(mu):
        if mu.kind == "semicircle":
            return 2.0 / (z + math.sqrt((z - 2.0) * (z + 2.0)))
        a, b = mu.support
        return 2.0 / (z + mu.alpha - 1.0 + math.sqrt((z - a) * (z - b)))
    return stieltjes_quad(mu, z, quad)


def stieltjes_quad(mu: SpectralMeasure, z: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    gap = float(z) - mu.right
    return integrate(mu, lambda t, l, r: 1.0 / (gap + r), quad)


def stieltjes_derivative(mu: SpectralMeasure, z: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``G_mu'(z) = -∫ dmu(t) / (z - t)**2``."""
    z = float(z)
    _check_right(mu, z, strict=True)
    if _closed_form(mu):
        g = stieltjes(mu, z)
        if mu.kind == "semicircle":
            # G**2 - z G + 1 = 0
            return g * g / (g * g - 1.0)
        al = mu.alpha
        # K(G(z)) = z with K(m) = 1/(1 - al m) + 1/m
        return 1.0 / (al / (1.0 - al * g) ** 2 - 1.0 / (g * g))
    gap = z - mu.right
    return -integrate(mu, lambda t, l, r: 1.0 / (gap + r) ** 2, quad)


def stieltjes_edge(mu: SpectralMeasure, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``lim_{z -> r(mu)+} G_mu(z)``; ``INFINITE`` when the density does not vanish at the edge."""
    if _closed_form(mu):
        if mu.kind == "semicircle":
            return 1.0
        s = math.sqrt(mu.alpha)
        return 1.0 / (s * (1.0 + s))
    edge = float(mu.density(np.array([mu.right]))[0])
    if edge > 1e-12:
        return INFINITE
    return integrate(mu, lambda t, l, r: 1.0 / r, quad)


def k_inverse(mu: SpectralMeasure, m: float, quad: QuadratureSpec = DEFAULT_QUAD,
              tol: float = 1e-13, max_iter: int = 200) -> float:
    """Inverse of ``G_mu`` on ``(r(mu), inf)``, for ``0 < m < G_mu(r(mu))``."""
    m = float(m)
    edge = stieltjes_edge(mu, quad)
    if not 0.0 < m < edge:
        raise DomainError(f"m={m} outside (0, {edge})")
    if _closed_form(mu):
        if mu.kind == "semicircle":
            return m + 1.0 / m
        return 1.0 / (1.0 - mu.alpha * m) + 1.0 / m
    return _k_inverse_newton(mu, m, quad, tol, max_iter)


def _k_inverse_newton(mu, m, quad, tol, max_iter):
    # G is strictly decreasing; G(r + 1/m) <= m since z - t >= z - r on the support
    r = mu.right
    lo, hi = r, r + 1.0 / m + (mu.right - mu.left)
    z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = stieltjes(mu, z, quad) - m
        if f > 0:
            lo = z
        else:
            hi = z
        if abs(f) <= tol * max(1.0, m) or hi - lo <= 4 * np.finfo(float).eps * hi:
            return z
        step = f / stieltjes_derivative(mu, z, quad)
        z_new = z - step
        z = z_new if lo < z_new < hi else 0.5 * (lo + hi)
    raise RuntimeError(f"k_inverse did not converge for m={m}")


def r_transform(mu: SpectralMeasure, m: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``R_mu(m) = K_mu(m) - 1/m``."""
    m = float(m)
    if _closed_form(mu):
        edge = stieltjes_edge(mu)
        if not 0.0 < m < edge:
            raise DomainError(f"m={m} outside (0, {edge})")
        if mu.kind == "semicircle":
            return m
        return 1.0 / (1.0 - mu.alpha * m)
    return k_inverse(mu, m, quad) - 1.0 / m


# ---------------------------------------------------------------------------
# logarithmic potential

def log_potential(mu: SpectralMeasure, x: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``∫ log|x - t| dmu(t)`` for ``x >= r(mu)``."""
    x = float(x)
    _check_right(mu, x, strict=False)
    if _closed_form(mu):
        if mu.kind == "semicircle":
            s = math.sqrt((x - 2.0) * (x + 2.0))
            return x / (x + s) - 0.5 + math.log(0.5 * (x + s))
        a, b = mu.support
        sa = math.sqrt(mu.alpha)
        w = x - 1.0 - mu.alpha
        q = 2.0 * sa / (w + math.sqrt((x - a) * (x - b)))
        return (math.log(x) + q / sa - math.log1p(sa * q) / mu.alpha
                - math.log1p(q / sa))
    return log_potential_quad(mu, x, quad)


def log_potential_quad(mu: SpectralMeasure, x: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    x = float(x)
    _check_right(mu, x, strict=False)
    gap = x - mu.right
    return integrate(mu, lambda t, l, r: np.log(gap + r), quad)
