"""Joint rate functions for the top eigenvalue(s) and spike overlap(s).

Covers the rank-one spiked GOE/GUE (single top pair and the ``n`` largest
pairs) and the spiked-covariance Wishart model. Every rate is normalized by
its infimum over the admissible set, computed once per parameter set by a
coarse grid followed by Nelder-Mead refinement and cached.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import spectral as sp
from .optimize import golden_max
from .spherical import j_fast, j_semicircle
from .spectral import INFINITE, DomainError

__all__ = [
    "RateConfig", "Constants", "GoeRateQuery", "RatePoint", "MultiRateQuery", "WishartRateQuery",
    "GlobalMin", "InnerMax", "constants", "inner_objective", "maximize_inner", "h_closed",
    "goe_raw", "rate_goe", "second_eig", "u_star", "argmin_u", "global_min", "regime_of",
    "multi_raw", "rate_multi", "multi_global_min", "minimize_second", "wishart_potential",
    "wishart_inner", "wishart_raw", "rate_wishart", "wishart_global_min", "inject_fault",
    "clear_cache",
]

SEMI = sp.semicircle()


@dataclass(frozen=True)
class RateConfig:
    grid_step: float = 0.01      # coarse grid spacing for normalizing infima
    refine_tol: float = 1e-10    # Nelder-Mead xatol/fatol
    golden_tol: float = 1e-10    # inner-sup golden-section bracket width
    tie_tol: float = 1e-12       # inner-sup values closer than this are ties
    x_span: float = 4.0          # grid extends this far beyond the expected minimizer


DEFAULTS = RateConfig()


# ---------------------------------------------------------------------------
# single-initialization cache

_cache: dict = {}
_cache_lock = threading.Lock()
_key_locks: dict = {}
_faults: set = set()


def _once(key, compute):
    if key in _cache:
        return _cache[key]
    with _cache_lock:
        lock = _key_locks.setdefault(key, threading.Lock())
    with lock:
        if key not in _cache:
            _cache[key] = compute()
    return _cache[key]


def clear_cache():
    """Forget cached constants and normalizing infima."""
    with _cache_lock:
        _cache.clear()


@contextmanager
def inject_fault(name: str):
    """Temporarily corrupt a constant; used to check that verification notices."""
    _faults.add(name)
    try:
        yield
    finally:
        _faults.discard(name)


# ---------------------------------------------------------------------------
# constants and the inner variational problem

@dataclass(frozen=True)
class Constants:
    C: float        # inf over x of x^2/4 - L_sigma(x)
    Cprime: float   # -1 + L_sigma(2)


def _potential(x: float) -> float:
    return 0.25 * x * x - sp.log_potential(SEMI, x)


def constants() -> Constants:
    def compute():
        x, neg = golden_max(lambda x: -_potential(x), 2.0, 12.0, tol=1e-12)
        c = min(-neg, _potential(2.0))
        return Constants(C=c, Cprime=-1.0 + sp.log_potential(SEMI, 2.0))

    out = _once(("constants",), compute)
    if "cprime-sign" in _faults:
        return Constants(out.C, -out.Cprime)
    return out


def _log_pot_sigma(x):
    """Vectorized semicircle log-potential for ``x >= 2``."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt((x - 2.0) * (x + 2.0))
    return x / (x + s) - 0.5 + np.log(0.5 * (x + s))


def inner_objective(tau: float, y: float) -> float:
    """``J(sigma, tau/2, y) - y^2/4 + L_sigma(y)`` for ``y >= 2``."""
    if not y >= 2.0:
        raise DomainError(f"y={y} must be >= 2")
    if tau < 0:
        raise DomainError("tau must be non-negative")
    return j_semicircle(0.5 * tau, y) - 0.25 * y * y + sp.log_potential(SEMI, y)


@dataclass(frozen=True)
class InnerMax:
    y_star: float
    h: float


def _pick(candidates, golden, tie_tol):
    # analytic candidates first; ties resolve to the smallest y
    best = max(h for _, h in candidates)
    if golden[1] > best + tie_tol:
        return golden
    return min((c for c in candidates if c[1] >= best - tie_tol), key=lambda c: c[0])


def maximize_inner(tau: float, x: float, config: RateConfig = DEFAULTS) -> InnerMax:
    """Maximize ``inner_objective(tau, .)`` over ``[2, x]``."""
    tau, x = float(tau), float(x)
    if not x >= 2.0 or tau < 0:
        raise DomainError(f"need x >= 2 and tau >= 0, got x={x}, tau={tau}")
    pts = {2.0, x}
    if tau >= 1.0:
        y_pop = tau + 1.0 / tau
        if y_pop <= x:
            pts.add(y_pop)
    cands = [(y, inner_objective(tau, y)) for y in sorted(pts)]
    golden = golden_max(lambda y: inner_objective(tau, y), 2.0, x, tol=config.golden_tol)
    y, h = _pick(cands, golden, config.tie_tol)
    return InnerMax(y, h)


def h_closed(tau: float, x: float) -> float:
    """Closed form of the inner maximum."""
    if not x >= 2.0 or tau < 0:
        raise DomainError(f"need x >= 2 and tau >= 0, got x={x}, tau={tau}")
    if tau <= 1.0:
        return 0.25 * tau * tau + constants().Cprime
    return inner_objective(tau, min(tau + 1.0 / tau, x))


def _h_closed_vec(tau, x, cprime):
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    safe = np.where(tau > 1.0, tau, 2.0)
    y = np.minimum(safe + 1.0 / safe, x)
    pop = 0.5 * safe * y - 0.5 - 0.5 * np.log(safe) + 0.5 * _log_pot_sigma(y) - 0.25 * y * y
    return np.where(tau > 1.0, pop, 0.25 * tau * tau + cprime)


def regime_of(tau: float, x: float) -> str:
    if tau <= 1.0:
        return "sticking"
    return "popped" if tau + 1.0 / tau < x else "blocked"


# ---------------------------------------------------------------------------
# spiked Wigner, top pair

@dataclass(frozen=True)
class GoeRateQuery:
    x: float
    u: float
    theta: float
    beta: int = 1


@dataclass(frozen=True)
class RatePoint:
    value: float
    raw: float
    y_star: float
    regime: Optional[str]


@dataclass(frozen=True)
class GlobalMin:
    x: float
    u: float
    raw_inf: float


def _check_beta(beta):
    if beta not in (1, 2):
        raise DomainError(f"beta must be 1 or 2, got {beta}")


def goe_raw(x: float, u: float, theta: float, config: RateConfig = DEFAULTS):
    """Un-normalized rate ``I(x, u)`` with its inner maximizer; ``(inf, nan, None)`` off ``S``."""
    if not (x >= 2.0 and 0.0 <= u < 1.0):
        return INFINITE, math.nan, None
    tau = theta * (1.0 - u)
    inner = maximize_inner(tau, x, config)
    raw = (0.25 * x * x - 0.5 * theta * x * u - sp.log_potential(SEMI, x)
           - 0.5 * math.log1p(-u) - inner.h)
    return raw, inner.y_star, regime_of(tau, x)


def _goe_raw_vec(x, u, theta):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = _h_closed_vec(theta * (1.0 - u), x, constants().Cprime)
    return 0.25 * x * x - 0.5 * theta * x * u - _log_pot_sigma(x) - 0.5 * np.log1p(-u) - h


def _normalize(raw, inf, beta):
    diff = raw - inf
    if diff < -1e-9:
        raise RuntimeError(f"rate below its normalizing infimum by {-diff:.3e}")
    return beta * max(diff, 0.0)


def rate_goe(q: GoeRateQuery, config: RateConfig = DEFAULTS) -> RatePoint:
    _check_beta(q.beta)
    if q.theta < 0:
        raise DomainError("theta must be non-negative")
    raw, y, regime = goe_raw(q.x, q.u, q.theta, config)
    if raw == INFINITE:
        return RatePoint(INFINITE, INFINITE, y, regime)
    inf = global_min(q.theta, q.beta, config).raw_inf
    return RatePoint(_normalize(raw, inf, q.beta), raw, y, regime)


def second_eig(q: GoeRateQuery, config: RateConfig = DEFAULTS) -> float:
    """Limit of the second eigenvalue under the conditioning ``(x, u)``."""
    if not (q.x >= 2.0 and 0.0 <= q.u < 1.0):
        raise DomainError(f"(x, u)=({q.x}, {q.u}) outside [2, inf) x [0, 1)")
    return maximize_inner(q.theta * (1.0 - q.u), q.x, config).y_star


def u_star(theta: float, x: float) -> Optional[float]:
    """Stationary overlap in the sticking regime; ``None`` when it is negative."""
    if not x >= 2.0:
        raise DomainError(f"x={x} must be >= 2")
    if not theta > 0:
        raise DomainError("theta must be positive")
    tx = theta * x
    one_minus = (tx - math.sqrt(tx * tx - 4.0 * theta * theta)) / (2.0 * theta * theta)
    u = 1.0 - one_minus
    return None if u < 0 else u


def argmin_u(theta: float, x: float, beta: int = 1, config: RateConfig = DEFAULTS):
    """Minimizer over ``u in [0, 1)`` of the rate at fixed ``x``, with the rate there."""
    if not x >= 2.0:
        raise DomainError(f"x={x} must be >= 2")
    u = u_star(theta, x) if theta > 0 else None
    u = 0.0 if u is None else u
    return u, rate_goe(GoeRateQuery(x, u, theta, beta), config).value


def _refine(fun, start, bounds, config):
    res = optimize.minimize(fun, np.asarray(start, dtype=float), method="Nelder-Mead",
                            bounds=bounds,
                            options={"xatol": config.refine_tol, "fatol": config.refine_tol * 1e-3,
                                     "maxiter": 4000, "maxfev": 8000})
    return res.x, float(res.fun)


def _goe_numeric_min(theta: float, config: RateConfig):
    x_hi = max(2.0, theta + 1.0 / max(theta, 1e-12)) + config.x_span
    x_hi = min(x_hi, 50.0)
    xs = np.arange(2.0, x_hi + 1e-12, config.grid_step)
    us = np.arange(0.0, 1.0 - 0.5 * config.grid_step, config.grid_step)
    X, U = np.meshgrid(xs, us, indexing="ij")
    R = _goe_raw_vec(X, U, theta)
    i, j = np.unravel_index(np.argmin(R), R.shape)

    def fun(p):
        return goe_raw(p[0], p[1], theta, config)[0]

    p, val = _refine(fun, (xs[i], us[j]), [(2.0, None), (0.0, 1.0 - 1e-12)], config)
    return GlobalMin(float(p[0]), float(p[1]), val)


def global_min(theta: float, beta: int = 1, config: RateConfig = DEFAULTS) -> GlobalMin:
    """Minimizer of ``I`` over ``S`` and the infimum used for normalization.

    The raw rate does not depend on ``beta``; it only scales the normalized value.
    """
    _check_beta(beta)
    theta = float(theta)

    def compute():
        best = _goe_numeric_min(theta, config)
        # the typical point is always a candidate; keep whichever is lower
        if theta > 1.0:
            cand = (theta + 1.0 / theta, 1.0 - 1.0 / theta ** 2)
        else:
            cand = (2.0, 0.0)
        raw = goe_raw(*cand, theta, config)[0]
        # ties at rounding level go to the exact point
        if raw <= best.raw_inf + config.tie_tol:
            best = GlobalMin(cand[0], cand[1], min(raw, best.raw_inf))
        return best

    return _once(("goe", theta, config), compute)


# ---------------------------------------------------------------------------
# n largest eigenvalues

@dataclass(frozen=True)
class MultiRateQuery:
    xs: Sequence[float]
    us: Sequence[float]
    theta: float
    beta: int = 1


def _multi_admissible(xs, us) -> bool:
    if len(xs) != len(us) or len(xs) == 0:
        raise DomainError("xs and us must be non-empty and of equal length")
    if any(x < 2.0 for x in xs) or any(u < 0.0 for u in us):
        return False
    if any(xs[i] < xs[i + 1] for i in range(len(xs) - 1)):
        return False
    return math.fsum(us) < 1.0


def multi_raw(xs, us, theta: float, config: RateConfig = DEFAULTS):
    """Un-normalized rate of the ``n`` largest pairs and the predicted next eigenvalue."""
    xs = [float(v) for v in xs]
    us = [float(v) for v in us]
    if not _multi_admissible(xs, us):
        return INFINITE, math.nan, None
    s = math.fsum(us)
    tau = theta * (1.0 - s)
    inner = maximize_inner(tau, xs[-1], config)
    raw = 0.0
    for x, u in zip(xs, us):
        raw += 0.25 * x * x - 0.5 * theta * x * u - sp.log_potential(SEMI, x)
    raw -= inner.h + 0.5 * math.log1p(-s)
    return raw, inner.y_star, regime_of(tau, xs[-1])


def _multi_raw_vec(X, U, theta):
    # X, U: (k, n) arrays of admissible configurations
    cprime = constants().Cprime
    s = U.sum(axis=1)
    head = (0.25 * X * X - 0.5 * theta * X * U - _log_pot_sigma(X)).sum(axis=1)
    return head - _h_closed_vec(theta * (1.0 - s), X[:, -1], cprime) - 0.5 * np.log1p(-s)


def _multi_decode(p, n):
    # x_{n-1} = 2 + p_{n-1}^2, x_i = x_{i+1} + p_i^2 ; u_i = q_i^2
    inc = np.asarray(p[:n]) ** 2
    xs = 2.0 + np.cumsum(inc[::-1])[::-1]
    us = np.asarray(p[n:]) ** 2
    return xs, us


def multi_global_min(theta: float, n: int, config: RateConfig = DEFAULTS, seed: int = 0):
    """``(xs, us, raw_inf)`` minimizing the ``n``-pair rate."""
    theta = float(theta)
    if n == 1:
        g = global_min(theta, 1, config)
        return (g.x,), (g.u,), g.raw_inf

    def compute():
        rng = np.random.default_rng(seed)
        k = 40000
        inc = rng.exponential(0.5, size=(k, n))
        X = 2.0 + np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
        X[: k // 4, 1:] = 2.0  # bias a quarter of the draws toward the bulk edge
        U = rng.dirichlet(np.ones(n + 1), size=k)[:, :n]
        U[: k // 4, 1:] = 0.0
        R = _multi_raw_vec(X, U, theta)
        starts = [np.concatenate([X[np.argmin(R)], U[np.argmin(R)]])]
        g = global_min(theta, 1, config)
        starts.append(np.concatenate([[g.x] + [2.0] * (n - 1), [g.u] + [0.0] * (n - 1)]))
        best = None
        for st in starts:
            xs, us = st[:n], st[n:]
            p0 = np.concatenate([np.sqrt(np.maximum(np.diff(np.append(xs, 2.0)[::-1])[::-1], 0)),
                                 np.sqrt(us)])

            def fun(p):
                xs_, us_ = _multi_decode(p, n)
                return multi_raw(xs_, us_, theta, config)[0]

            p, val = _refine(fun, p0, None, config)
            cand = (*_multi_decode(p, n), val)
            direct = multi_raw(st[:n], st[n:], theta, config)[0]
            if direct < cand[2]:
                cand = (np.asarray(st[:n]), np.asarray(st[n:]), direct)
            if best is None or cand[2] < best[2]:
                best = cand
        return tuple(map(float, best[0])), tuple(map(float, best[1])), float(best[2])

    return _once(("multi", theta, n, config, seed), compute)


def rate_multi(q: MultiRateQuery, config: RateConfig = DEFAULTS) -> RatePoint:
    _check_beta(q.beta)
    raw, y, regime = multi_raw(q.xs, q.us, q.theta, config)
    if raw == INFINITE:
        return RatePoint(INFINITE, INFINITE, y, regime)
    inf = multi_global_min(q.theta, len(q.xs), config)[2]
    return RatePoint(_normalize(raw, inf, q.beta), raw, y, regime)


def minimize_second(theta: float, x1: float, u1: float, steps: int = 201,
                    config: RateConfig = DEFAULTS):
    """Grid minimizer ``(x2, u2)`` of the two-pair rate at fixed ``(x1, u1)``.

    The grid contains ``x2 = 2`` and ``u2 = 0`` exactly; ties resolve to the
    smallest ``u2`` and then the smallest ``x2``.
    """
    x2 = np.linspace(2.0, x1, steps)
    u2 = np.linspace(0.0, 1.0 - u1, steps, endpoint=False)
    X2, U2 = np.meshgrid(x2, u2, indexing="ij")
    X = np.stack([np.full(X2.size, x1), X2.ravel()], axis=1)
    U = np.stack([np.full(U2.size, u1), U2.ravel()], axis=1)
    R = _multi_raw_vec(X, U, theta).reshape(X2.shape)
    best = R.min()
    ii, jj = np.nonzero(R <= best + config.tie_tol * max(1.0, abs(best)) * 1e3)
    k = np.lexsort((x2[ii], u2[jj]))[0]
    return float(x2[ii[k]]), float(u2[jj[k]]), float(R[ii[k], jj[k]])


# ---------------------------------------------------------------------------
# spiked Wishart

@dataclass(frozen=True)
class WishartRateQuery:
    x: float
    u: float
    gamma: float
    alpha: float
    beta: int = 1


def wishart_potential(y: float, alpha: float) -> float:
    """Top-eigenvalue rate (up to a constant) of the null Wishart model."""
    mp = sp.marchenko_pastur(alpha)
    return y - (1.0 - alpha) * math.log(y) - 2.0 * alpha * sp.log_potential(mp, y)


def _wishart_tilt(gamma, u, alpha):
    return gamma * (1.0 - u) / (2.0 * alpha * (1.0 + gamma))


def wishart_inner(theta: float, x: float, alpha: float, config: RateConfig = DEFAULTS) -> InnerMax:
    """Maximize ``2 alpha J(pi_alpha, theta, y) - I(y)`` over ``y in [r, x]``."""
    mp = sp.marchenko_pastur(alpha)
    r = mp.right
    if x < r:
        raise DomainError(f"x={x} lies left of the Marchenko-Pastur edge {r}")

    def F(y):
        return 2.0 * alpha * j_fast(mp, theta, y) - wishart_potential(y, alpha)

    pts = {r, x}
    if theta > 0:
        # F decreases where 2 theta <= G(y) and is concave beyond; locate its stationary point
        edge = sp.stieltjes_edge(mp)
        y0 = r if 2 * theta >= edge else sp.k_inverse(mp, 2.0 * theta)

        def dF(y):
            return 2 * alpha * theta - 1 + (1 - alpha) / y + alpha * sp.stieltjes(mp, y)

        lo = max(y0, r) + 1e-14
        if lo < x and dF(lo) > 0 > dF(x):
            pts.add(optimize.brentq(dF, lo, x, xtol=1e-14, rtol=1e-15))
    cands = [(y, F(y)) for y in sorted(pts)]
    golden = golden_max(F, r, x, tol=config.golden_tol)
    y, h = _pick(cands, golden, config.tie_tol)
    return InnerMax(y, h)


def wishart_raw(x: float, u: float, gamma: float, alpha: float, config: RateConfig = DEFAULTS):
    if gamma < 0:
        raise DomainError("gamma must be non-negative (tilt limit defined for theta >= 0 only)")
    mp = sp.marchenko_pastur(alpha)
    if not (x >= mp.right and 0.0 <= u < 1.0):
        return INFINITE, math.nan, None
    theta = _wishart_tilt(gamma, u, alpha)
    inner = wishart_inner(theta, x, alpha, config)
    raw = (wishart_potential(x, alpha) - gamma / (1.0 + gamma) * x * u
           - alpha * math.log1p(-u) - inner.h)
    regime = "sticking" if inner.y_star == mp.right else (
        "blocked" if inner.y_star == x else "popped")
    return raw, inner.y_star, regime


def wishart_global_min(gamma: float, alpha: float, config: RateConfig = DEFAULTS) -> GlobalMin:
    gamma, alpha = float(gamma), float(alpha)

    def compute():
        r = sp.marchenko_pastur(alpha).right
        step = max(config.grid_step, 0.05)
        x_hi = r + (1.0 + gamma) * (1.0 + alpha / max(gamma, 1e-12)) + config.x_span if gamma > 0 \
            else r + config.x_span
        x_hi = min(x_hi, r + 40.0)
        xs = np.arange(r, x_hi, step)
        us = np.arange(0.0, 1.0 - 0.5 * step, step)
        best = (math.inf, r, 0.0)
        for x in xs:
            for u in us:
                v = wishart_raw(x, u, gamma, alpha, config)[0]
                if v < best[0]:
                    best = (v, x, u)

        def fun(p):
            return wishart_raw(p[0], p[1], gamma, alpha, config)[0]

        p, val = _refine(fun, best[1:], [(r, None), (0.0, 1.0 - 1e-12)], config)
        out = GlobalMin(float(p[0]), float(p[1]), val)
        if best[0] < val:
            out = GlobalMin(float(best[1]), float(best[2]), best[0])
        # spiked-covariance typical point as an extra candidate
        if gamma > math.sqrt(alpha):
            cand = ((1.0 + gamma) * (1.0 + alpha / gamma),
                    (1.0 - alpha / gamma ** 2) / (1.0 + alpha / gamma))
        else:
            cand = (r, 0.0)
        raw = wishart_raw(*cand, gamma, alpha, config)[0]
        if raw <= out.raw_inf + config.tie_tol:
            out = GlobalMin(cand[0], cand[1], min(raw, out.raw_inf))
        return out

    return _once(("wishart", gamma, alpha, config), compute)


def rate_wishart(q: WishartRateQuery, config: RateConfig = DEFAULTS) -> RatePoint:
    _check_beta(q.beta)
    raw, y, regime = wishart_raw(q.x, q.u, q.gamma, q.alpha, config)
    if raw == INFINITE:
        return RatePoint(INFINITE, INFINITE, y, regime)
    inf = wishart_global_min(q.gamma, q.alpha, config).raw_inf
    return RatePoint(0.5 * _normalize(raw, inf, q.beta), raw, y, regime)
