"""Large-N limit of the spherical integral ``(1/N) log E_e exp(N theta <e, X e>)``.

The limit depends on the spectral measure ``mu`` of ``X`` and its largest
eigenvalue ``lam``. Below the threshold ``2 theta <= G_mu(lam)`` it is the
annealed value driven by the R-transform; above it the top eigenvalue
dominates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .quadrature import DEFAULT_QUAD, QuadratureSpec
from .spectral import DomainError, SpectralMeasure

__all__ = ["SphericalLimit", "v_star", "j_limit", "j_fast", "j_semicircle"]


@dataclass(frozen=True)
class SphericalLimit:
    theta: float
    lambda_max: float
    v_star: float
    value: float
    branch: str  # "subcritical" or "supercritical"


def _g_at(mu: SpectralMeasure, lam: float, quad: QuadratureSpec) -> float:
    if lam == mu.right:
        return sp.stieltjes_edge(mu, quad)
    return sp.stieltjes(mu, lam, quad)


def _check(mu, theta, lam):
    if not theta >= 0:
        raise DomainError(f"theta must be non-negative, got {theta}")
    if lam < mu.right:
        raise DomainError(f"lambda={lam} lies left of the support edge {mu.right}")


def _branch(mu, theta, lam, quad):
    return "subcritical" if 2.0 * theta <= _g_at(mu, lam, quad) else "supercritical"


def v_star(mu: SpectralMeasure, theta: float, lam: float,
           quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Maximizer ``v(theta, mu, lam)``: ``R_mu(2 theta)`` below threshold,
    ``lam - 1/(2 theta)`` above it, and the mean of ``mu`` at ``theta = 0``."""
    theta, lam = float(theta), float(lam)
    _check(mu, theta, lam)
    if theta == 0.0:
        return sp.mean(mu, quad)
    if _branch(mu, theta, lam, quad) == "subcritical":
        m = 2.0 * theta
        if m >= sp.stieltjes_edge(mu, quad):
            # lam sits on the edge and 2 theta hits G(r) exactly: K(G(r)) = r
            return mu.right - 1.0 / m
        return sp.r_transform(mu, m, quad)
    return lam - 1.0 / (2.0 * theta)


def j_limit(mu: SpectralMeasure, theta: float, lam: float,
            quad: QuadratureSpec = DEFAULT_QUAD) -> SphericalLimit:
    """Evaluate ``theta v - 1/2 ∫ log(1 + 2 theta v - 2 theta y) dmu(y)`` by quadrature."""
    theta, lam = float(theta), float(lam)
    _check(mu, theta, lam)
    branch = _branch(mu, theta, lam, quad)
    v = v_star(mu, theta, lam, quad)
    if theta == 0.0:
        return SphericalLimit(theta, lam, v, 0.0, branch)
    # 1 + 2 theta (v - y) = 2 theta (c - y) with c >= r(mu)
    c = v + 1.0 / (2.0 * theta)
    gap = c - mu.right
    if gap < -1e-12 * max(1.0, abs(c)):
        raise AssertionError(
            f"log argument non-positive on the support (theta={theta}, lam={lam}, v={v})")
    gap = max(gap, 0.0)
    two_t = 2.0 * theta
    integral = sp.integrate(mu, lambda t, l, r: np.log(two_t * (gap + r)), quad)
    return SphericalLimit(theta, lam, v, theta * v - 0.5 * integral, branch)


def j_fast(mu: SpectralMeasure, theta: float, lam: float,
           quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Same value as ``j_limit(...).value`` through the log-potential of ``mu``.

    Uses ``∫ log(2 theta (c - y)) dmu = log(2 theta) + L_mu(c)`` with
    ``c = v + 1/(2 theta)``, which is closed form for the built-in laws.
    """
    theta, lam = float(theta), float(lam)
    if theta == 0.0:
        _check(mu, theta, lam)
        return 0.0
    v = v_star(mu, theta, lam, quad)
    c = max(v + 1.0 / (2.0 * theta), mu.right)
    return theta * v - 0.5 * (math.log(2.0 * theta) + sp.log_potential(mu, c, quad))


def j_semicircle(theta: float, x: float) -> float:
    """Closed form of the limit for the semicircle law and top eigenvalue ``x >= 2``."""
    theta, x = float(theta), float(x)
    if theta < 0 or not x >= 2.0:
        raise DomainError(f"need theta >= 0 and x >= 2, got theta={theta}, x={x}")
    g = 1.0 if x == 2.0 else sp.stieltjes(sp.semicircle(), x)
    if theta <= 0.5 * g:
        return theta * theta
    return (theta * x - 0.5 + 0.5 * math.log(1.0 / (2.0 * theta))
            - 0.5 * sp.log_potential(sp.semicircle(), x))
