"""Invariant suite behind ``spiked-ldp verify``.

Each check returns ``(passed, detail)``. Grids are reduced relative to the
unit tests so the fast suite stays well under a few minutes on one core.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as sci_integrate

from . import ensembles as ens
from . import rates as R
from . import spectral as sp
from .spherical import j_limit, j_semicircle

SEMI = sp.semicircle()


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _grid(fast, coarse, fine):
    return coarse if fast else fine


def check_cprime(fast):
    c = R.constants()
    # independent route: direct quadrature of the log-potential at the edge
    ref = -1.0 + sci_integrate.quad(lambda t: math.log(2.0 - t) * math.sqrt(4 - t * t) / (2 * math.pi),
                                    -2.0, 2.0, epsabs=1e-13, limit=200)[0]
    err = abs(c.Cprime - ref)
    return err < 1e-10, f"|C' - (-1 + L(2))| = {err:.2e}"


def check_transforms(fast):
    worst = 0.0
    for mu in (SEMI, sp.marchenko_pastur(0.5), sp.marchenko_pastur(0.2)):
        for z in mu.right + np.array([1e-3, 0.1, 1.0, 4.0]):
            worst = max(worst, abs(sp.stieltjes(mu, z) - sp.stieltjes_quad(mu, z)))
            worst = max(worst, abs(sp.log_potential(mu, z) - sp.log_potential_quad(mu, z)))
        edge = sp.stieltjes_edge(mu)
        for m in np.linspace(0.05, 0.95, 7) * edge:
            worst = max(worst, abs(sp.stieltjes(mu, sp.k_inverse(mu, m)) - m))
    return worst < 1e-9, f"max deviation {worst:.2e}"


def check_semicircle_r(fast):
    ms = np.linspace(0.1, 0.9, 9)
    err = max(abs(sp.r_transform(SEMI, m) - m) for m in ms)
    gen = sp.generic(lambda t: np.sqrt(np.clip(4 - t * t, 0, None)), -2.0, 2.0)
    err = max(err, max(abs(sp.r_transform(gen, m) - m) for m in ms[::4]))
    return err < 1e-8, f"max |R(m) - m| = {err:.2e}"


def check_spherical_agreement(fast):
    k = _grid(fast, 8, 20)
    worst = 0.0
    for th in np.linspace(0.1, 2.0, k):
        for x in np.linspace(2.0, 6.0, k):
            worst = max(worst, abs(j_semicircle(th, x) - j_limit(SEMI, th, x).value))
    return worst < 1e-8, f"{k}x{k} grid, max deviation {worst:.2e}"


def check_spherical_monotone(fast):
    ths = np.linspace(0.0, 2.0, 15)
    xs = np.linspace(2.0, 6.0, 15)
    J = np.array([[j_semicircle(t, x) for x in xs] for t in ths])
    ok = bool(np.all(np.diff(J, axis=0) >= -1e-12) and np.all(np.diff(J, axis=1) >= -1e-12))
    return ok and J[0].max() == 0.0, "non-decreasing in theta and lambda, zero at theta=0"


def check_inner_closed_form(fast):
    k = _grid(fast, 12, 40)
    worst = 0.0
    for tau in np.linspace(0.0, 4.0, k):
        for x in np.linspace(2.0, 6.0, k):
            worst = max(worst, abs(R.h_closed(tau, x) - R.maximize_inner(tau, x).h))
    return worst < 1e-6, f"{k}x{k} grid, max |h_closed - sup| = {worst:.2e}"


def check_rate_zero_at_min(fast):
    msgs, ok = [], True
    for th in (3.0, 0.5, 1.5):
        g = R.global_min(th)
        v = R.rate_goe(R.GoeRateQuery(g.x, g.u, th)).value
        ok &= v < 1e-9
        msgs.append(f"theta={th}: ({g.x:.4f}, {g.u:.4f}) rate {v:.1e}")
    g = R.global_min(3.0)
    ok &= abs(g.x - 10 / 3) < 1e-3 and abs(g.u - 8 / 9) < 1e-3
    return ok, "; ".join(msgs)


def check_nonnegative(fast):
    rng = np.random.default_rng(3)
    k = _grid(fast, 60, 300)
    low = math.inf
    for _ in range(k):
        th = rng.uniform(0.2, 4.0)
        low = min(low, R.rate_goe(R.GoeRateQuery(rng.uniform(2, 7), rng.uniform(0, 0.999), th)).value)
    return low >= 0.0, f"min over {k} random points = {low:.3e}"


def check_flat_region(fast):
    th, x = 3.0, 3.0
    # theta (1 - u*) + 1/(theta (1 - u*)) = x
    tau = 0.5 * (x + math.sqrt(x * x - 4.0))
    u_edge = 1.0 - tau / th
    vals = [R.goe_raw(x, u, th)[0] for u in np.linspace(0.0, u_edge, 25)]
    spread = max(vals) - min(vals)
    return spread < 1e-8, f"spread on [0, {u_edge:.4f}] = {spread:.2e}"


def check_stationarity(fast):
    h, worst = 1e-5, 0.0
    for th, x in ((3.0, 4.0), (3.0, 5.0), (1.5, 3.0)):
        u = R.u_star(th, x)
        d = (R.goe_raw(x, u + h, th)[0] - R.goe_raw(x, u - h, th)[0]) / (2 * h)
        worst = max(worst, abs(d))
    return worst < 1e-5, f"max |dI/du| at u_theta = {worst:.2e}"


def check_monotone_decrease(fast):
    h, worst = 1e-6, 0.0
    th = 3.0
    for x in (3.0, 4.0, 5.0):
        for u in np.linspace(0.02, 0.6, 8):
            tau = th * (1 - u)
            if tau < 1:
                continue
            d = (R.goe_raw(x, u + h, th)[0] - R.goe_raw(x, u - h, th)[0]) / (2 * h)
            # the -log(1-u)/2 term cancels against the tilt derivative of the sup
            target = -0.5 * th * (x - min(tau + 1 / tau, x))
            worst = max(worst, abs(d - target))
    return worst < 1e-5, f"max deviation from -theta(x - min(y, x))/2 = {worst:.2e}"


def tilt_identity(theta, theta_prime, beta=1):
    """Rate at the ``theta'``-typical point from the exact change of spike strength."""
    return beta * (theta - theta_prime) ** 2 * (1.0 - theta_prime ** -4) / 4.0


def check_tilting(fast):
    worst = 0.0
    for tp in (1.5, 2.0, 2.5):
        v = R.rate_goe(R.GoeRateQuery(tp + 1 / tp, 1 - 1 / tp ** 2, 3.0)).value
        worst = max(worst, abs(v - tilt_identity(3.0, tp)))
    return worst < 1e-6, f"max |rate - (theta-theta')^2 (1-theta'^-4)/4| = {worst:.2e}"


def check_multi_reduction(fast):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(_grid(fast, 20, 100)):
        x, u = rng.uniform(2, 6), rng.uniform(0, 0.99)
        a = R.rate_multi(R.MultiRateQuery((x,), (u,), 3.0)).value
        b = R.rate_goe(R.GoeRateQuery(x, u, 3.0)).value
        worst = max(worst, abs(a - b))
    return worst <= 4 * np.finfo(float).eps, f"max |rate_multi(n=1) - rate_goe| = {worst:.1e}"


def check_second_overlap(fast):
    steps = _grid(fast, 61, 201)
    bad = []
    for x1 in (2.5, 10 / 3, 4.0, 5.0):
        for u1 in (0.0, 0.3, 0.5, 0.7, 8 / 9):
            x2, u2, _ = R.minimize_second(3.0, x1, u1, steps=steps)
            if (u2 == 0.0) != (x2 == 2.0):
                bad.append((x1, u1, x2, u2))
    return not bad, f"joint minimizers violating u2 = 0 <=> x2 = 2: {bad or 'none'}"


def check_wishart(fast):
    g = R.wishart_global_min(2.0, 0.5)
    v = R.rate_wishart(R.WishartRateQuery(g.x, g.u, 2.0, 0.5)).value
    ok = abs(g.x - 3.75) < 1e-3 and abs(g.u - 0.7) < 1e-3 and v < 1e-9
    return ok, f"minimizer ({g.x:.5f}, {g.u:.5f}), rate {v:.1e}"


def check_eigen_orthonormal(fast):
    worst = 0.0
    for kind in ("goe", "gue"):
        spec = ens.EnsembleSpec(kind, 80, theta=2.0, seed=1, samples=5)
        for i in range(spec.samples):
            worst = max(worst, abs(ens.sample(spec, i).overlaps.sum() - 1.0))
    spec = ens.EnsembleSpec("wishart", 120, m=60, gamma=2.0, seed=1, samples=3)
    for i in range(spec.samples):
        worst = max(worst, abs(ens.sample(spec, i).overlaps.sum() - 1.0))
    return worst < 1e-8, f"max |sum overlaps - 1| = {worst:.1e} (residual bound checked on construction)"


def check_interlacing(fast):
    ok = True
    for i in range(20):
        x = ens.draw_matrix(ens.EnsembleSpec("goe", 50, seed=100 + i), 0)
        base = np.linalg.eigvalsh(x)
        x[0, 0] += 1.3
        ok &= bool(np.all(np.linalg.eigvalsh(x) >= base - 1e-12))
    return ok, "spike moves every eigenvalue weakly up on 20 matrices"


def check_determinism(fast):
    spec = ens.EnsembleSpec("goe", 60, theta=3.0, seed=9, samples=6)
    a = ens.mc_stats(spec).to_json()
    b = ens.mc_stats(spec, threads=3).to_json()
    return a == b, "serial and threaded summaries identical"


def _histogram_deviation(vals, mu):
    counts, edges = np.histogram(vals, bins=20, range=mu.support)
    width = edges[1] - edges[0]
    emp = counts / (vals.size * width)
    # compare against bin averages: midpoint values are poor near square-root edges
    avg = [sci_integrate.quad(lambda t: float(mu.density(t)), a, b)[0] / width
           for a, b in zip(edges[:-1], edges[1:])]
    return float(np.max(np.abs(emp - np.asarray(avg))))


def check_semicircle_bulk(fast):
    n = _grid(fast, 1000, 2000)
    dev = _histogram_deviation(ens.sample(ens.EnsembleSpec("goe", n, seed=2)).values, SEMI)
    return dev < 0.05, f"N={n}, sup-norm histogram deviation {dev:.3f}"


def check_mp_bulk(fast):
    n = _grid(fast, 1000, 2000)
    vals = ens.sample(ens.EnsembleSpec("wishart", n, m=n // 2, seed=4)).values
    dev = _histogram_deviation(vals, sp.marchenko_pastur(0.5))
    return dev < 0.05, f"N={n}, alpha=0.5, sup-norm histogram deviation {dev:.3f}"


def check_prior_normalization(fast):
    worst = 0.0
    for n, beta in ((3, 1), (10, 2), (50, 1)):
        for exact in (False, True):
            mass = sci_integrate.quad(
                lambda u: math.exp(ens.overlap_prior_logdensity(u, n, beta, exact)),
                0, 1, epsabs=1e-12, limit=200, points=[1.0 / n])[0]
            worst = max(worst, abs(mass - 1.0))
    return worst < 1e-8, f"max |mass - 1| = {worst:.1e}"


def check_bbp_sweep(fast):
    samples = 4 if fast else 20
    worst = 0.0
    for th in (0.6, 0.8, 1.0, 1.2, 1.5):
        s = ens.mc_stats(ens.EnsembleSpec("goe", 1000, theta=th, seed=12, samples=samples))
        target = th + 1 / th if th > 1 else 2.0
        worst = max(worst, abs(s.lambda_max_mean - target))
    return worst < 0.06, f"N=1000, {samples} samples: max |mean lambda_max - typical| = {worst:.3f}"


CHECKS: list[tuple[str, Callable]] = [
    ("constants.cprime", check_cprime),
    ("spectral.closed_vs_quadrature", check_transforms),
    ("spectral.semicircle_r_transform", check_semicircle_r),
    ("spherical.semicircle_agreement", check_spherical_agreement),
    ("spherical.monotonicity", check_spherical_monotone),
    ("rates.inner_closed_form", check_inner_closed_form),
    ("rates.zero_at_minimizer", check_rate_zero_at_min),
    ("rates.non_negative", check_nonnegative),
    ("rates.flat_region", check_flat_region),
    ("rates.stationarity", check_stationarity),
    ("rates.monotone_decrease", check_monotone_decrease),
    ("rates.tilting_identity", check_tilting),
    ("rates.multi_reduction", check_multi_reduction),
    ("rates.second_overlap_law", check_second_overlap),
    ("rates.wishart_minimizer", check_wishart),
    ("ensembles.orthonormality", check_eigen_orthonormal),
    ("ensembles.interlacing", check_interlacing),
    ("ensembles.determinism", check_determinism),
    ("ensembles.semicircle_bulk", check_semicircle_bulk),
    ("ensembles.mp_bulk", check_mp_bulk),
    ("ensembles.prior_normalization", check_prior_normalization),
    ("ensembles.bbp_sweep", check_bbp_sweep),
]


def run_checks(fast: bool = True, only=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        if only and not any(name.startswith(p) for p in only):
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn(fast)
        except Exception as exc:  # a crashing invariant is a failed invariant
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
