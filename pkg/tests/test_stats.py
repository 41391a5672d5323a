import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps
from scipy.integrate import quad

from wfsim import stats
from wfsim.engine import derive_stream

samples = arrays(np.float64, st.integers(1, 50), elements=st.floats(0.0, 1.0))


@given(st.data())
def test_w1_empirical_matches_cdf_form(data):
    a = data.draw(samples)
    b = data.draw(arrays(np.float64, a.size, elements=st.floats(0.0, 1.0)))
    assert stats.w1_empirical(a, b) == pytest.approx(stats.w1_cdf(a, b), abs=1e-12)


@given(samples)
def test_w1_empirical_is_zero_on_itself_and_symmetric(a):
    b = a[::-1] * 0.5
    assert stats.w1_empirical(a, a) == 0.0
    assert stats.w1_empirical(a, b) == pytest.approx(stats.w1_empirical(b, a))


def test_w1_empirical_requires_equal_sizes():
    with pytest.raises(ValueError):
        stats.w1_empirical(np.zeros(3), np.zeros(4))


def _w1_quad(a1, a2, b1, b2):
    f = lambda x: abs(sps.beta(a1, a2).cdf(x) - sps.beta(b1, b2).cdf(x))
    return quad(f, 0, 1, limit=200, epsabs=1e-13)[0]


@pytest.mark.parametrize("pair", [(1, 1, 1.5, 0.5), (2, 3, 4, 1), (0.5, 0.5, 0.8, 0.2), (1.6, 1.2, 2.0, 0.8)])
def test_beta_w1_closed_form_against_quadrature(pair):
    assert stats.w1_beta_closed(*pair) == pytest.approx(_w1_quad(*pair), abs=1e-8)


def test_beta_w1_closed_form_frozen_values():
    assert stats.w1_beta_closed(1, 1, 1.5, 0.5) == pytest.approx(0.25)
    assert stats.w1_beta_closed(2, 3, 4, 1) == pytest.approx(0.4)


def test_beta_w1_rejects_unequal_mass():
    with pytest.raises(ValueError):
        stats.w1_beta_closed(1, 1, 2, 2)


def test_grid_density_uniform_moments():
    g = stats.GridDensity.uniform(256)
    assert g.total_mass() == pytest.approx(1.0)
    for k in range(1, 6):
        assert g.moment(k) == pytest.approx(1 / (k + 1), rel=1e-12)
    assert g.variance() == pytest.approx(1 / 12)


@given(arrays(np.float64, 64, elements=st.floats(0.01, 10.0)), arrays(np.float64, 20, elements=st.floats(0.0, 1.0)))
def test_quantile_inverts_cdf(masses, u):
    g = stats.GridDensity.from_masses(masses)
    assert np.allclose(g.cdf(g.quantile(u)), u, atol=1e-10)


def test_from_pdf_matches_beta_moments():
    g = stats.GridDensity.from_pdf(sps.beta(2.0, 3.0).pdf, 1024)
    assert g.mean() == pytest.approx(0.4, abs=1e-6)
    assert g.variance() == pytest.approx(sps.beta(2.0, 3.0).var(), rel=1e-4)


def test_w1_grid_between_point_masses():
    a = stats.GridDensity.point_mass(0.2, 1000)
    b = stats.GridDensity.point_mass(0.7, 1000)
    assert stats.w1_grid(a, b) == pytest.approx(0.5, abs=2e-3)


def test_w1_sample_grid_against_sorted_estimator():
    g = stats.GridDensity.from_pdf(sps.beta(2, 2).pdf, 2048)
    st_ = derive_stream(1, 2)
    x = stats.beta_sample(1.5, 3.0, st_, 200_000)
    y = stats.beta_sample(2.0, 2.0, st_, 200_000)
    assert stats.w1_sample_grid(x, g) == pytest.approx(stats.w1_empirical(x, y), abs=3e-3)


def test_beta_sample_moments(stream):
    x = stats.beta_sample(0.8, 0.2, stream, 400_000)
    assert abs(x.mean() - 0.8) < 4 * stats.mc_stderr(x)


def test_variance_stderr_normal_case(stream):
    x = stream.normal(100_000)
    assert stats.variance_stderr(x) == pytest.approx(np.sqrt(2 / x.size), rel=0.05)


def test_loglog_slope_exact_power():
    M = np.array([16.0, 64, 256, 1024])
    assert stats.loglog_slope(M, 3 * M**-0.5) == pytest.approx(-0.5)


def test_empirical_law_mean_and_sorted():
    law = stats.EmpiricalLaw(np.array([[3.0, 1.0, 2.0]]))
    assert np.allclose(law.mean(), [[2.0]])
    assert np.allclose(law.sorted(), [[1.0, 2.0, 3.0]])


def test_moments_empirical():
    m = stats.moments_empirical(np.array([0.0, 1.0]), 3)
    assert np.allclose(m, [1.0, 0.5, 0.5, 0.5])
