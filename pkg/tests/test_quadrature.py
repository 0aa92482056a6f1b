import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spiked_ldp.quadrature import QuadratureError, QuadratureSpec, integrate, integrate_edges


def test_polynomial_exact():
    assert integrate(lambda t: 3 * t ** 2, 0.0, 2.0) == pytest.approx(8.0, abs=1e-14)


def test_breakpoints_handle_kink():
    val = integrate(lambda t: np.abs(t - 0.3), 0.0, 1.0, breakpoints=(0.3,))
    assert val == pytest.approx(0.3 ** 2 / 2 + 0.7 ** 2 / 2, abs=1e-14)


def test_edge_singularity():
    # ∫_0^1 log(t) dt = -1 with log singularity at the left edge
    val = integrate_edges(lambda t, l, r: np.log(l), 0.0, 1.0)
    assert val == pytest.approx(-1.0, abs=1e-10)


def test_sqrt_edges_semicircle_mass():
    val = integrate_edges(lambda t, l, r: np.sqrt(l * r) / (2 * np.pi), -2.0, 2.0)
    assert val == pytest.approx(1.0, abs=1e-13)


def test_budget_exhaustion_raises():
    spec = QuadratureSpec(tol=1e-15, max_panels=16, edge_substitution=False, order=2)
    with pytest.raises(QuadratureError):
        integrate(lambda t: np.sin(200 * t) * np.exp(t), 0.0, 3.0, spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(tol=0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_panels=4)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_gaussian_segment_matches_erf(width, a):
    b = a + width
    exact = 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))
    got = integrate(lambda t: np.exp(-t * t / 2) / math.sqrt(2 * math.pi), a, b)
    assert got == pytest.approx(exact, abs=1e-12)
