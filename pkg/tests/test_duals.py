import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from wfsim import duals
from wfsim.duals import CEMETERY, FTWDualParams
from wfsim.engine import derive_stream

FTW = FTWDualParams(0.4, 0.3, 0.2, (0.3, 0.15))


def forward_moment(z, m, delta, p):
    """E_z[Z_1^m] by quadrature over the replaced fraction."""
    down = quad(lambda u: (z * (1 - delta * u)) ** m, 0, 1, epsabs=1e-14)[0]
    up = quad(lambda u: (z + delta * u * (1 - z)) ** m, 0, 1, epsabs=1e-14)[0]
    return (1 - p) * down + p * up


@pytest.mark.parametrize("z,m,delta", [(0.3, 3, 0.7), (0.8, 5, 0.2), (0.5, 1, 1.0), (0.1, 8, 0.9)])
def test_neutral_one_step_duality_exact(z, m, delta):
    assert duals.neutral_dual_moment(z, m, 1, delta) == pytest.approx(forward_moment(z, m, delta, z), abs=1e-13)


@pytest.mark.parametrize("z,m", [(0.4, 1), (0.7, 3), (0.2, 6), (0.9, 10)])
def test_ftw_one_step_duality_exact(z, m):
    p = float(FTW.drift()(np.array([z]))[0])
    assert duals.ftw_dual_moment(z, m, 1, FTW) == pytest.approx(forward_moment(z, m, FTW.delta, p), abs=1e-13)


@given(st.integers(1, 20), st.floats(0.01, 1.0))
def test_neutral_rows_sum_to_one(m, delta):
    row = duals.neutral_dual_row(m, delta)
    assert abs(row.total() - 1) < 1e-12
    assert np.all(row.prob >= 0)
    assert np.all(row.dest <= m)


@given(st.integers(0, 20), st.floats(0.05, 1.0), st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_ftw_rows_sum_to_one(m, delta, t0, t1):
    params = FTWDualParams(delta, t0, t1, (0.25, 0.2, 0.05))
    row = duals.ftw_dual_row(m, params)
    assert abs(row.total() - 1) < 1e-12
    assert np.all(row.prob >= -1e-15)
    assert np.all(row.dest <= m + params.J)


def test_neutral_matrix_is_stochastic_and_absorbing_at_one():
    P = duals.neutral_dual_matrix(8, 0.6)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P[1, 1] == 1.0 and P[0, 0] == 1.0


def test_rho_and_mean_branching():
    assert np.allclose(FTW.rho, [0.0, 0.5, 0.5])
    assert FTW.mean_branching == pytest.approx(1.5)
    assert FTW.J == 2


def test_ftw_params_reject_large_rates():
    with pytest.raises(ValueError):
        FTWDualParams(1.0, 0.8, 0.8, (0.2,))


def test_ftw_simulation_matches_rows():
    m0, size = 4, 400_000
    row = duals.ftw_dual_row(m0, FTW).as_dict()
    sim = duals.ftw_dual_simulate(m0, FTW, 1, derive_stream(4, 1), size)
    for dest, prob in row.items():
        freq = np.mean(sim[1] == dest)
        assert abs(freq - prob) < 5 * np.sqrt(prob * (1 - prob) / size) + 1e-6


def test_event_sampler_matches_rows():
    m0, size = 3, 400_000
    row = duals.ftw_dual_row(m0, FTW).as_dict()
    low, _ = duals.coupled_dual_paths(m0, FTW, FTW, 1, derive_stream(4, 2), size)
    for dest, prob in row.items():
        freq = np.mean(low[1] == dest)
        assert abs(freq - prob) < 5 * np.sqrt(prob * (1 - prob) / size) + 1e-6


def test_coupled_duals_ordered_for_smaller_selection():
    low = FTWDualParams(0.4, 0.2, 0.1, (0.2, 0.05))
    high = FTWDualParams(0.4, 0.2, 0.1, (0.3, 0.15))
    a, b = duals.coupled_dual_paths(3, low, high, 15, derive_stream(4, 3), 20_000)
    # a killed dual contributes z**inf = 0, so the cemetery ranks above every line count
    rank = lambda m: np.where(m == CEMETERY, np.iinfo(int).max, m)
    assert np.all(rank(a) <= rank(b))
    assert np.any((a != CEMETERY) & (b == CEMETERY))


def test_absorption_one_line_is_mutation_ratio():
    h = duals.absorption_table(4, 0.3, 0.8, 0.6)
    assert h[0] == 1.0
    assert h[1] == pytest.approx(4 / 7, rel=1e-12)
    assert np.all(np.diff(h) < 0)


def test_absorption_ratio_tends_to_beta_moment_ratio():
    t0, t1 = 0.8, 0.6
    errs = []
    for delta in (0.1, 0.05, 0.025):
        h = duals.absorption_table(4, delta, t0, t1)
        target = np.array([(m - 1 + 2 * t0) / (m - 1 + 2 * t0 + 2 * t1) for m in range(1, 5)])
        errs.append(np.max(np.abs(h[1:] / h[:-1] - target)))
    assert errs[-1] < 1e-2
    assert errs[0] > errs[1] > errs[2]


def test_absorption_requires_positive_rates():
    with pytest.raises(ValueError):
        duals.absorption_table(3, 0.5, 0.0, 0.4)


def test_neutral_duality_check_small_run():
    res = duals.duality_check_neutral(0.5, 3, 10, 0.7, 200_000, master_seed=42)
    assert res.passed()
    assert res.rhs == pytest.approx(duals.neutral_dual_moment(0.5, 3, 10, 0.7))


def test_ftw_duality_check_small_run():
    res = duals.duality_check_ftw(0.7, 2, 4, FTW, 200_000, master_seed=3)
    assert res.passed()
    assert abs(res.rhs - duals.ftw_dual_moment(0.7, 2, 4, FTW)) < 4 * res.stderr_rhs + 1e-12


def test_lambda_table_rows():
    tab = duals.lambda_table(5, 0.5)
    assert tab[3, 1] == pytest.approx(11 / 96)


def test_coupled_duals_mutation_stays_below_until_killed():
    low = FTWDualParams(0.4, 0.2, 0.1, (0.3, 0.15))
    high = FTWDualParams(0.4, 0.0, 0.0, (0.3, 0.15))
    a, b = duals.coupled_dual_paths(3, low, high, 15, derive_stream(4, 4), 20_000)
    alive = a != CEMETERY
    assert np.all(b != CEMETERY)
    assert np.all(a[alive] <= b[alive])
