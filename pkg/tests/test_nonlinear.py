import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from wfsim import kernel, nonlinear
from wfsim.chains import DriftContractError
from wfsim.engine import derive_stream
from wfsim.stats import GridDensity


def test_affine_drift_rejects_out_of_range():
    with pytest.raises(DriftContractError):
        nonlinear.AffineMeanDrift(0.5, 0.4, 0.3)


def test_affine_stationary_mean_from_grid_flow():
    drift = nonlinear.AffineMeanDrift(0.2, 0.1, 0.3)
    eta, _ = nonlinear.invariant_law(0.5, drift, grid_size=1024)
    assert eta.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert eta.mean() == pytest.approx(1 / 3, abs=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.4), st.floats(-0.2, 0.3), st.floats(-0.2, 0.3), st.floats(0.1, 0.8))
def test_law_flow_mean_follows_affine_recursion(a, b, c, delta):
    assume(all(0 <= a + b * x + c * m <= 1 for x in (0, 1) for m in (0, 1)))
    drift = nonlinear.AffineMeanDrift(a, b, c)
    mu0 = GridDensity.uniform(1024)
    flow = nonlinear.law_flow(mu0, delta, drift, 8, keep=False)
    m = 0.5
    for k in range(9):
        # piecewise-constant projection moves the mean by O(h^2) per step
        assert flow.means[k] == pytest.approx(m, abs=5e-5)
        m = m + 0.5 * delta * (a + (b + c - 1) * m)


def test_constant_drift_matches_kernel_density():
    drift = nonlinear.AffineMeanDrift(0.3, 0.0, 0.0)
    eta, _ = nonlinear.invariant_law(0.6, drift, grid_size=512)
    ref = kernel.invariant_density(0.6, 0.3, grid_size=512, tol=1e-12).density
    assert eta.l1_distance(ref) < 1e-6


def test_mean_only_fixed_point_by_bisection():
    drift = nonlinear.AffineMeanDrift(0.2, 0.0, 0.5)
    s, dens = nonlinear.invariant_fixed_point_mean_only(drift, 0.5, grid_size=512)
    assert s == pytest.approx(0.4, abs=1e-10)
    assert dens.mean() == pytest.approx(0.4, abs=1e-3)
    with pytest.raises(ValueError):
        nonlinear.invariant_fixed_point_mean_only(nonlinear.AffineMeanDrift(0.2, 0.1, 0.3), 0.5)


@pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
def test_perturbation_variance_matches_grid_invariant(eps):
    a, b, delta = 0.3, 0.4, 0.5
    mean, var = nonlinear.perturbation_stats(a, b, eps, delta)
    eta, _ = nonlinear.invariant_law(delta, nonlinear.EpsilonDrift(a, b, eps), grid_size=2048)
    assert eta.mean() == pytest.approx(mean, abs=1e-5)
    assert eta.variance() == pytest.approx(var, rel=1e-3)


def test_perturbation_at_zero_eps_is_kernel_variance():
    mean, var = nonlinear.perturbation_stats(0.3, 0.4, 0.0, 0.5)
    assert mean == pytest.approx(0.5)
    assert var == pytest.approx(kernel.invariant_variance(0.5, 0.5))


def test_perturbation_moment_bound_holds_on_grid():
    a, b, eps, delta = 0.3, 0.4, 0.5, 0.5
    e1, _ = nonlinear.invariant_law(delta, nonlinear.EpsilonDrift(a, b, eps), grid_size=1024)
    e0, _ = nonlinear.invariant_law(delta, nonlinear.EpsilonDrift(a, b, 0.0), grid_size=1024)
    for k in range(1, 5):
        assert abs(e1.moment(k) - e0.moment(k)) <= nonlinear.perturbation_moment_bound(k, b, eps)


def test_coupling_of_identical_laws_has_zero_gap(stream):
    drift = nonlinear.AffineMeanDrift(0.2, 0.1, 0.3)
    mu = GridDensity.uniform(256)
    series = nonlinear.nonlinear_coupling(drift, drift, 0.5, mu, mu, 10, stream, size=2000)
    assert np.all(series.gap == 0.0)


def test_coupling_gap_contracts_at_the_drift_rate(stream):
    drift = nonlinear.AffineMeanDrift(0.2, 0.1, 0.3)
    delta = 0.5
    eta, _ = nonlinear.invariant_law(delta, drift, grid_size=512)
    mu0 = GridDensity.point_mass(0.02, 512)
    series = nonlinear.nonlinear_coupling(drift, drift, delta, mu0, eta, 20, stream, size=20_000)
    factor = 1 - delta * (1 - drift.L1 - drift.L2) / 2
    bound = series.gap[0] * factor ** np.arange(21)
    assert np.all(series.gap <= bound + 3 * series.gap_stderr + 1e-15)
    assert np.all(series.recursion_bound(delta) >= 0)


def test_nonlinear_chain_mean_tracks_flow(stream):
    drift = nonlinear.AffineMeanDrift(0.2, 0.1, 0.3)
    mu0 = GridDensity.uniform(256)
    path, flow = nonlinear.nonlinear_chain_simulate(mu0, 0.5, drift, 15, stream, size=100_000)
    se = path.terminal.std() / np.sqrt(path.terminal.size)
    assert abs(path.terminal.mean() - flow.means[-1]) < 4 * se


def test_scaled_mean_field_drift_checks_boundary():
    with pytest.raises(ValueError):
        nonlinear.ScaledMeanFieldDrift(lambda x, m: 0.5 - 0 * x, 100)
