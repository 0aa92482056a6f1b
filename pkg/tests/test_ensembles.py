import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from spiked_ldp import ensembles as ens
from spiked_ldp import spectral as sp


def goe(n=60, theta=0.0, seed=1, samples=1):
    return ens.EnsembleSpec("goe", n, theta=theta, seed=seed, samples=samples)


class TestEigen:
    def test_two_by_two(self):
        ed = ens.eigen_full(np.array([[0.0, 1.5], [1.5, 0.0]]))
        assert ed.values == pytest.approx([-1.5, 1.5], abs=1e-15)
        assert ed.overlaps == pytest.approx([0.5, 0.5], abs=1e-15)

    def test_diagonal(self):
        ed = ens.eigen_full(np.diag([3.0, -1.0, 2.0]))
        assert list(ed.values) == [-1.0, 2.0, 3.0]
        assert ed.top == (3.0, 1.0)

    def test_rejects_nonsymmetric_and_wrong_size(self):
        with pytest.raises(sp.DomainError):
            ens.eigen_full(np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(sp.DomainError):
            ens.eigen_full(np.eye(3), dim=4)

    @pytest.mark.parametrize("kind", ["goe", "gue"])
    def test_orthonormal_eigenvectors(self, kind):
        y = ens.draw_matrix(ens.EnsembleSpec(kind, 80, theta=2.0, seed=5))
        vals, vecs = np.linalg.eigh(y)
        assert np.abs(vecs.conj().T @ vecs - np.eye(80)).max() < 1e-12
        ed = ens.eigen_full(y)
        assert ed.overlaps.sum() == pytest.approx(1.0, abs=1e-12)

    def test_interlacing_with_minor(self):
        y = ens.draw_matrix(goe(70, 1.5, seed=9))
        full = np.linalg.eigvalsh(y)
        minor = np.linalg.eigvalsh(y[1:, 1:])
        assert np.all(full[:-1] <= minor + 1e-12)
        assert np.all(minor <= full[1:] + 1e-12)


class TestSampling:
    def test_deterministic_per_index(self):
        a = ens.sample(goe(seed=3), 4)
        b = ens.sample(goe(seed=3), 4)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, ens.sample(goe(seed=3), 5).values)

    def test_threads_do_not_change_results(self):
        spec = goe(40, 2.0, seed=11, samples=12)
        assert ens.mc_stats(spec, threads=1) == ens.mc_stats(spec, threads=4)

    def test_single_sample_reproduces_draw(self):
        spec = goe(40, 2.0, seed=2, samples=1)
        lam, u = ens.sample(spec, 0).top
        s = ens.mc_stats(spec)
        assert (s.lambda_max_mean, s.overlap_mean) == (lam, u)
        assert s.lambda_max_std == 0.0

    def test_entry_variances(self):
        n = 300
        y = ens.draw_matrix(goe(n, seed=4))
        off = y[np.triu_indices(n, 1)]
        assert np.var(off) * n == pytest.approx(1.0, abs=0.02)
        assert np.var(np.diag(y)) * n == pytest.approx(2.0, abs=0.35)
        h = ens.draw_matrix(ens.EnsembleSpec("gue", n, seed=4))
        assert np.mean(np.abs(h[np.triu_indices(n, 1)]) ** 2) * n == pytest.approx(1.0, abs=0.02)

    def test_semicircle_bulk(self):
        vals = ens.sample(goe(1500, seed=7)).values
        edges = np.linspace(-2, 2, 21)
        counts, _ = np.histogram(vals, bins=edges)
        ref = [integrate.quad(lambda t: math.sqrt(4 - t * t) / (2 * math.pi), a, b)[0]
               for a, b in zip(edges[:-1], edges[1:])]
        assert np.abs(counts / vals.size - ref).max() < 0.01

    def test_mp_bulk(self):
        alpha, n = 0.5, 2000
        spec = ens.EnsembleSpec("wishart", n, m=int(alpha * n), seed=8)
        vals = ens.sample(spec).values
        mp = sp.marchenko_pastur(alpha)
        assert vals.min() > mp.left - 0.05 and vals.max() < mp.right + 0.05
        assert vals.mean() == pytest.approx(1.0, abs=0.01)

    def test_unspiked_wishart_overlap_is_uniform(self):
        spec = ens.EnsembleSpec("wishart", 200, m=50, seed=1, samples=200)
        assert ens.mc_stats(spec).overlap_mean == pytest.approx(1 / 50, rel=0.25)

    @pytest.mark.slow
    @pytest.mark.parametrize("theta", [0.5, 1.5, 3.0])
    def test_top_eigenvalue_transition(self, theta):
        s = ens.mc_stats(goe(400, theta, seed=13, samples=10))
        target = theta + 1 / theta if theta > 1 else 2.0
        assert s.lambda_max_mean == pytest.approx(target, abs=0.08)
        assert s.overlap_mean == pytest.approx(max(0.0, 1 - theta ** -2), abs=0.06)


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(kind="xyz", n=10), dict(kind="goe", n=1), dict(kind="goe", n=10, samples=0),
        dict(kind="goe", n=10, theta=-1.0), dict(kind="wishart", n=10),
        dict(kind="wishart", n=10, m=11), dict(kind="wishart", n=10, m=5, gamma=-1.0),
        dict(kind="wishart", n=10, m=5, beta=4), dict(kind="goe", n=10, seed=-1),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(sp.DomainError):
            ens.EnsembleSpec(**kwargs)

    def test_desk_scale_warning(self):
        with pytest.warns(UserWarning):
            ens.EnsembleSpec("goe", 5000)

    def test_summary_json_round_trip(self):
        s = ens.mc_stats(goe(30, 1.0, samples=5))
        assert ens.McSummary.from_json(s.to_json()) == s


class TestOverlapPrior:
    @pytest.mark.parametrize("exact", [False, True])
    @pytest.mark.parametrize("n,beta", [(5, 1), (20, 2), (50, 1)])
    def test_normalized(self, n, beta, exact):
        mass = integrate.quad(lambda u: math.exp(ens.overlap_prior_logdensity(u, n, beta, exact)),
                              0, 1, limit=200, points=[1e-6, 1e-3, 0.1])[0]
        assert mass == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("n,beta", [(5, 1), (30, 2)])
    def test_exact_is_beta(self, n, beta):
        law = stats.beta(beta / 2, (n - 1) * beta / 2)
        for u in (0.01, 0.2, 0.6):
            assert ens.overlap_prior_logdensity(u, n, beta, exact=True) == pytest.approx(
                law.logpdf(u), abs=1e-9)

    def test_domain(self):
        with pytest.raises(sp.DomainError):
            ens.overlap_prior_logdensity(0.0, 5, 1)
        with pytest.raises(sp.DomainError):
            ens.overlap_prior_logdensity(0.5, 5, 3)


class TestTilting:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 4), st.floats(0, 4), st.floats(-3, 3), st.floats(-3, 3))
    def test_weight_is_affine_in_y11(self, th, tp, a, b):
        w = lambda y: float(ens.tilt_log_weight(y, th, tp, 50, 1))
        mid = w(0.5 * (a + b))
        assert mid == pytest.approx(0.5 * (w(a) + w(b)), abs=1e-9 * (1 + abs(mid)))

    def test_weight_matches_density_ratio(self):
        n, beta, th, tp, y = 40, 1, 2.0, 1.2, 0.7
        sd = math.sqrt(2 / (beta * n))
        ref = stats.norm.logpdf(y, th, sd) - stats.norm.logpdf(y, tp, sd)
        assert float(ens.tilt_log_weight(y, th, tp, n, beta)) == pytest.approx(ref, abs=1e-10)

    @pytest.mark.parametrize("method", ["point", "conditional", "naive"])
    def test_zero_when_no_tilt(self, method):
        est = ens.tilted_estimate(2.0, 2.0, goe(60, samples=200), window=(0.1, 0.05), method=method)
        assert est.value == pytest.approx(0.0, abs=1e-12)
        assert est.hits > 0

    def test_point_estimate_near_rate(self):
        from spiked_ldp.verify import tilt_identity
        est = ens.tilted_estimate(3.0, 2.0, goe(100, samples=1500, seed=21))
        assert est.target == pytest.approx((2.5, 0.75))
        assert abs(est.value - tilt_identity(3.0, 2.0)) < 4 * est.stderr + 0.01

    def test_rejects_wishart_and_negative(self):
        w = ens.EnsembleSpec("wishart", 20, m=10)
        with pytest.raises(sp.DomainError):
            ens.tilted_estimate(2.0, 1.0, w)
        with pytest.raises(sp.DomainError):
            ens.tilted_estimate(-1.0, 1.0, goe())
