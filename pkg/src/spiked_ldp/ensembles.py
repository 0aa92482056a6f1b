"""Spiked GOE/GUE and spiked-covariance Wishart samplers with Monte Carlo summaries.

Every draw is a pure function of ``(spec, sample index)``: the index is mixed
into the seed through ``numpy.random.SeedSequence`` spawn keys, so serial and
threaded runs produce identical numbers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import optimize, special

from .quadrature import QuadratureSpec, integrate
from .spectral import DomainError

__all__ = [
    "EnsembleSpec", "EigenData", "McSummary", "TiltedEstimate", "EigenSolverError",
    "sample_rng", "draw_matrix", "eigen_full", "sample_spiked_wigner", "sample_spiked_wishart",
    "sample", "mc_stats", "overlap_prior_logdensity", "tilt_log_weight", "tilted_estimate",
]

MAX_DESK_N = 4000
MAX_DESK_SAMPLES = 100_000
RESIDUAL_RTOL = 1e-10


class EigenSolverError(RuntimeError):
    """The eigensolver failed or returned a decomposition violating the residual bound."""


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str                 # goe | gue | wishart
    n: int                    # matrix dimension N (wishart: columns of Y)
    m: Optional[int] = None   # rows M of Y (wishart only)
    theta: float = 0.0
    gamma: float = 0.0
    seed: int = 0
    samples: int = 1
    beta: int = 1             # wishart only; goe/gue fix it

    def __post_init__(self):
        if self.kind not in ("goe", "gue", "wishart"):
            raise DomainError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if self.samples < 1:
            raise DomainError("samples must be at least 1")
        if self.kind == "wishart":
            if self.m is None or not 1 <= self.m <= self.n:
                raise DomainError("wishart needs 1 <= m <= n")
            if self.beta not in (1, 2):
                raise DomainError("beta must be 1 or 2")
            if self.gamma <= -1:
                raise DomainError("gamma must exceed -1")
        elif self.theta < 0:
            raise DomainError("theta must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if max(self.n, self.m or 0) > MAX_DESK_N or self.samples > MAX_DESK_SAMPLES:
            warnings.warn("request exceeds desk scale (N <= 4000, samples <= 1e5)", stacklevel=2)

    @property
    def dyson_beta(self) -> int:
        return {"goe": 1, "gue": 2}.get(self.kind, self.beta)

    @property
    def dim(self) -> int:
        return self.m if self.kind == "wishart" else self.n


@dataclass(frozen=True)
class EigenData:
    values: np.ndarray    # ascending
    overlaps: np.ndarray  # |v_i(1)|^2 aligned with values

    @property
    def top(self):
        return float(self.values[-1]), float(self.overlaps[-1])


@dataclass
class McSummary:
    kind: str
    n: int
    samples: int
    seed: int
    lambda_max_mean: float
    lambda_max_std: float
    overlap_mean: float
    overlap_std: float
    lambda_second_mean: float
    histograms: dict = field(default_factory=dict)
    m: Optional[int] = None
    theta: float = 0.0
    gamma: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "McSummary":
        return cls(**d)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for sample ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# ---------------------------------------------------------------------------
# matrices and eigendecomposition

def _gaussian(rng, shape, beta, var):
    if beta == 1:
        return rng.normal(scale=math.sqrt(var), size=shape)
    s = math.sqrt(var / 2.0)
    return rng.normal(scale=s, size=shape) + 1j * rng.normal(scale=s, size=shape)


def _wigner(rng, n, beta):
    # density ∝ exp(-beta N Tr X^2 / 4): off-diagonal E|X_ij|^2 = 1/N,
    # diagonal variance 2/N (beta=1) or 1/N (beta=2)
    a = _gaussian(rng, (n, n), beta, 1.0 / n)
    return (a + a.conj().T) / math.sqrt(2.0)


def draw_matrix(spec: EnsembleSpec, index: int = 0) -> np.ndarray:
    """The ``index``-th matrix of the run described by ``spec``."""
    rng = sample_rng(spec.seed, index)
    beta = spec.dyson_beta
    if spec.kind in ("goe", "gue"):
        y = _wigner(rng, spec.n, beta)
        y[0, 0] += spec.theta
        return y
    # W = Sigma^{1/2} Y Y* Sigma^{1/2}, Sigma = I + gamma e1 e1*, Y is M x N with variance 1/N
    y = _gaussian(rng, (spec.m, spec.n), beta, 1.0 / spec.n)
    y[0, :] *= math.sqrt(1.0 + spec.gamma)
    w = y @ y.conj().T
    return 0.5 * (w + w.conj().T)


def eigen_full(matrix, dim: Optional[int] = None, check: bool = True) -> EigenData:
    """Full eigendecomposition of a symmetric or Hermitian matrix.

    Eigenvalues come back ascending with the squared first component of each
    eigenvector. With ``check`` the residual ``||A v - lambda v||_2`` of every
    pair is bounded by ``1e-10 ||A||_2``.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or (dim is not None and a.shape[0] != dim):
        raise DomainError(f"expected a square matrix of size {dim}, got shape {a.shape}")
    if not np.array_equal(a, a.conj().T):
        raise DomainError("matrix is not exactly symmetric/Hermitian")
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver failed to converge: {exc}") from exc
    if check:
        norm = max(abs(vals[0]), abs(vals[-1]), np.finfo(float).tiny)
        resid = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
        worst = float(resid.max())
        if worst > RESIDUAL_RTOL * norm:
            raise EigenSolverError(f"eigen residual {worst:.3e} exceeds {RESIDUAL_RTOL:g}*||A||")
    overlaps = np.abs(vecs[0, :]) ** 2
    return EigenData(vals, overlaps)


def sample_spiked_wigner(spec: EnsembleSpec, index: int = 0) -> EigenData:
    if spec.kind not in ("goe", "gue"):
        raise DomainError("sample_spiked_wigner needs kind goe or gue")
    return eigen_full(draw_matrix(spec, index), spec.n)


def sample_spiked_wishart(spec: EnsembleSpec, index: int = 0) -> EigenData:
    if spec.kind != "wishart":
        raise DomainError("sample_spiked_wishart needs kind wishart")
    return eigen_full(draw_matrix(spec, index), spec.m)


def sample(spec: EnsembleSpec, index: int = 0) -> EigenData:
    if spec.kind == "wishart":
        return sample_spiked_wishart(spec, index)
    return sample_spiked_wigner(spec, index)


# ---------------------------------------------------------------------------
# Monte Carlo

def _top_stats(spec, index):
    ed = sample(spec, index)
    return ed.values[-1], ed.overlaps[-1], ed.values[-2] if ed.values.size > 1 else math.nan


def _map(fn, spec, threads):
    idx = range(spec.samples)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: fn(spec, i), idx))
    return [fn(spec, i) for i in idx]


def _hist(values, bins=20):
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def mc_stats(spec: EnsembleSpec, threads: int = 1) -> McSummary:
    """Aggregate top eigenvalue, top overlap and second eigenvalue over ``spec.samples`` draws."""
    rows = np.array(_map(_top_stats, spec, threads), dtype=float)
    lam, ov, sec = rows[:, 0], rows[:, 1], rows[:, 2]
    ddof = 1 if spec.samples > 1 else 0
    return McSummary(
        kind=spec.kind, n=spec.n, m=spec.m, samples=spec.samples, seed=spec.seed,
        theta=spec.theta, gamma=spec.gamma,
        lambda_max_mean=float(lam.mean()), lambda_max_std=float(lam.std(ddof=ddof)),
        overlap_mean=float(ov.mean()), overlap_std=float(ov.std(ddof=ddof)),
        lambda_second_mean=float(np.mean(sec)),
        histograms={"lambda_max": _hist(lam), "overlap": _hist(ov)},
    )


# ---------------------------------------------------------------------------
# overlap prior

def _prior_exponents(n, beta, exact):
    if exact:
        # law of |g_1|^2 / ||g||^2 for a real (beta=1) or complex (beta=2) Gaussian vector
        return beta / 2.0 - 1.0, (n - 1) * beta / 2.0 - 1.0
    return beta / 2.0, (n - 1) * beta / 2.0


@lru_cache(maxsize=None)
def _prior_log_norm(n, beta, exact):
    a, b = _prior_exponents(n, beta, exact)
    # substitute u = sin^2(phi/2) to tame the edge powers; mode scaling keeps exp() in range
    u_mode = min(max(a / (a + b), 1e-3), 1 - 1e-3) if a + b > 0 else 0.5
    shift = a * math.log(u_mode) + b * math.log1p(-u_mode)

    def f(phi):
        s2 = np.sin(0.5 * phi) ** 2
        c2 = np.cos(0.5 * phi) ** 2
        with np.errstate(divide="ignore"):
            logf = a * np.log(s2) + b * np.log(c2) - shift
        return np.exp(logf) * 0.5 * np.sin(phi)

    mass = integrate(f, 0.0, math.pi, QuadratureSpec(tol=1e-13, max_panels=20000))
    return -(math.log(mass) + shift)


def overlap_prior_logdensity(u: float, n: int, beta: int, exact: bool = False) -> float:
    """Log density of the squared first coordinate of a uniform unit vector.

    ``exact=False`` gives the large-deviation form ``C u^{beta/2} (1-u)^{(n-1) beta/2}``,
    which has the correct exponential rate but not the finite-``n`` law;
    ``exact=True`` gives the Beta(beta/2, (n-1) beta/2) density. The
    normalizer is computed by quadrature once per ``(n, beta, exact)``.
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"u={u} must lie strictly inside (0, 1)")
    if beta not in (1, 2) or n < 2:
        raise DomainError("need beta in {1, 2} and n >= 2")
    a, b = _prior_exponents(n, beta, exact)
    return _prior_log_norm(n, beta, exact) + a * math.log(u) + b * math.log1p(-u)


# ---------------------------------------------------------------------------
# change of spike strength

@dataclass(frozen=True)
class TiltedEstimate:
    value: float        # estimate of -(1/N) log P_theta[window]
    stderr: float
    ess: float
    hits: int           # samples (or conditional windows) with non-zero contribution
    target: tuple       # (x, u) centre of the window
    method: str


def tilt_log_weight(y11, theta: float, theta_prime: float, n: int, beta: int):
    """Log of dP_theta / dP_theta' as a function of the (1,1) entry alone."""
    y11 = np.asarray(y11, dtype=float)
    return (n * beta / 2.0) * (theta - theta_prime) * y11 \
        - (n * beta / 4.0) * (theta ** 2 - theta_prime ** 2)


def _scaled(logs):
    logs = np.asarray(logs, dtype=float)
    finite = np.isfinite(logs)
    if not finite.any():
        return None, -math.inf
    top = logs[finite].max()
    return np.where(finite, np.exp(logs - top), 0.0), top


def _log_ratio_and_se(log_num, log_den):
    """``log(mean(a) / mean(b))`` from log-values, its delta-method standard
    error, and the effective sample size of ``a``."""
    a, ta = _scaled(log_num)
    b, tb = _scaled(log_den)
    if a is None or b is None:
        return -math.inf, math.inf, 0.0
    k = a.size
    ma, mb = a.mean(), b.mean()
    z = a / ma - b / mb
    se = math.sqrt(z.var(ddof=1) / k) if k > 1 else 0.0
    ess = a.sum() ** 2 / (a ** 2).sum()
    return ta + math.log(ma) - tb - math.log(mb), se, ess


def _secular_window(vals_b, c2, y_lo_lam, x_win, u_win):
    """Interval of the (1,1) entry for which the top pair lands in the window.

    With the minor spectrum ``vals_b`` and squared projections ``c2`` of the
    first column, the top eigenvalue lam solves ``y = lam - sum c2/(lam - mu)``
    and its overlap is ``1 / (1 + sum c2/(lam - mu)^2)``; both are increasing
    in lam, so the window maps to an interval of y.
    """
    top = vals_b[-1]

    def f(lam):
        return lam - np.sum(c2 / (lam - vals_b))

    def u_of(lam):
        return 1.0 / (1.0 + np.sum(c2 / (lam - vals_b) ** 2))

    lo = max(x_win[0], top + 1e-12)
    hi = x_win[1]
    if lo >= hi:
        return None
    for target, side in ((u_win[0], "lo"), (u_win[1], "hi")):
        ua, ub = u_of(lo), u_of(hi)
        if side == "lo":
            if ub < target:
                return None
            if ua < target:
                lo = optimize.brentq(lambda l: u_of(l) - target, lo, hi, xtol=1e-13)
        else:
            if ua > target:
                return None
            if ub > target:
                hi = optimize.brentq(lambda l: u_of(l) - target, lo, hi, xtol=1e-13)
    return f(lo), f(hi)


def _log_gauss_interval(a, b, mean, sd):
    za, zb = (a - mean) / sd, (b - mean) / sd
    # log(Phi(zb) - Phi(za)) without cancellation in either tail
    if za > 0:
        la, lb = special.log_ndtr(-zb), special.log_ndtr(-za)
    else:
        la, lb = special.log_ndtr(za), special.log_ndtr(zb)
    if lb <= la:
        return -math.inf
    return lb + math.log1p(-math.exp(la - lb))


def tilted_estimate(theta: float, theta_prime: float, spec: EnsembleSpec,
                    window: tuple = (0.02, 0.01), method: str = "point",
                    threads: int = 1) -> TiltedEstimate:
    """Estimate ``-(1/N) log P_theta`` of the window around the ``theta'``-typical point.

    Matrices are drawn under ``theta'`` and reweighted by the likelihood ratio
    ``exp{(N beta/2)(theta - theta') Y11 - (N beta/4)(theta^2 - theta'^2)}``.
    The ratio is normalized by the ``theta'``-probability of the same window
    so that the estimate vanishes at ``theta = theta'``.

    ``method="naive"`` averages the weighted indicators directly.
    ``method="conditional"`` integrates the weight over ``Y11`` given the rest
    of the matrix, which is exact because the window is an interval in
    ``Y11`` and ``Y11`` is Gaussian under both laws.
    ``method="point"`` (default) pins the top eigenvalue at the target
    exactly, using the density of ``Y11`` at the secular root, and keeps the
    overlap window of half-width ``window[1]``; ``window[0]`` is ignored.
    This removes the bias from the eigenvalue half of the window.
    """
    if spec.kind not in ("goe", "gue"):
        raise DomainError("tilted_estimate needs a Wigner ensemble")
    if theta < 0 or theta_prime < 0:
        raise DomainError("spike strengths must be non-negative")
    n, beta = spec.n, spec.dyson_beta
    if theta_prime > 1:
        target = (theta_prime + 1.0 / theta_prime, 1.0 - 1.0 / theta_prime ** 2)
    else:
        target = (2.0, 0.0)
    x_win = (target[0] - window[0], target[0] + window[0])
    u_win = (max(target[1] - window[1], 0.0), min(target[1] + window[1], 1.0))
    draw = EnsembleSpec(spec.kind, n, theta=theta_prime, seed=spec.seed, samples=spec.samples)

    if method == "naive":
        def one(s, i):
            y = draw_matrix(s, i)
            lam, u = eigen_full(y, n).top
            inside = x_win[0] <= lam <= x_win[1] and u_win[0] <= u <= u_win[1]
            lw = float(tilt_log_weight(y[0, 0].real, theta, theta_prime, n, beta))
            return (lw if inside else -math.inf), (0.0 if inside else -math.inf)
    elif method == "conditional":
        sd = math.sqrt(2.0 / (beta * n))

        def one(s, i):
            y = draw_matrix(s, i)
            vals_b, vecs_b = np.linalg.eigh(y[1:, 1:])
            c2 = np.abs(vecs_b.conj().T @ y[1:, 0]) ** 2
            iv = _secular_window(vals_b, c2, None, x_win, u_win)
            if iv is None:
                return -math.inf, -math.inf
            return (_log_gauss_interval(iv[0], iv[1], theta, sd),
                    _log_gauss_interval(iv[0], iv[1], theta_prime, sd))
    elif method == "point":
        sd = math.sqrt(2.0 / (beta * n))
        lam0 = target[0]

        def one(s, i):
            y = draw_matrix(s, i)
            vals_b, vecs_b = np.linalg.eigh(y[1:, 1:])
            if lam0 <= vals_b[-1]:
                return -math.inf, -math.inf
            c2 = np.abs(vecs_b.conj().T @ y[1:, 0]) ** 2
            d = lam0 - vals_b
            y11 = lam0 - np.sum(c2 / d)
            u = 1.0 / (1.0 + np.sum(c2 / d ** 2))
            if not u_win[0] <= u <= u_win[1]:
                return -math.inf, -math.inf
            # density of lam at lam0 given the rest; dY11/dlam = 1/u
            jac = -math.log(u)
            return (jac - (y11 - theta) ** 2 / (2 * sd * sd),
                    jac - (y11 - theta_prime) ** 2 / (2 * sd * sd))
    else:
        raise DomainError(f"unknown method {method!r}")

    rows = np.array(_map(one, draw, threads), dtype=float)
    log_ratio, se, ess = _log_ratio_and_se(rows[:, 0], rows[:, 1])
    hits = int(np.isfinite(rows[:, 0]).sum())
    if ess < 10:
        warnings.warn(f"degenerate importance weights (effective sample size {ess:.1f})",
                      stacklevel=2)
    return TiltedEstimate(float(-log_ratio / n) + 0.0, float(se / n), float(ess), hits,
                          target, method)
