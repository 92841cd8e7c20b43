import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_gof.variography import (
    VARIOGRAM_FAMILIES,
    EmpiricalVariogram,
    NoPairsInRange,
    VariogramFitFailed,
    VariogramModel,
    correlation,
    covariance_matrix,
    empirical_semivariogram,
    fit_variogram_wls,
    normalize_family,
    wls_objective,
)


def test_correlation_values():
    m = VariogramModel("exponential", 0, 0.16, 0.2)
    assert correlation(m, 0.0) == 1.0
    assert correlation(m, 0.2) == pytest.approx(np.exp(-1), rel=1e-15)
    assert correlation(m, 0.2) == pytest.approx(0.367879, abs=1e-6)
    sph = VariogramModel("spherical", 0, 1, 0.5)
    assert correlation(sph, 0.5) == 0.0 and correlation(sph, 2.0) == 0.0
    assert correlation(sph, 0.25) == pytest.approx(1 - 0.75 + 0.0625)
    rq = VariogramModel("rational-quadratic", 0, 1, 0.5)
    assert correlation(rq, 0.5) == pytest.approx(0.5)


def test_family_names():
    assert normalize_family("Exponential") == "exponential"
    assert normalize_family("RationalQuadratic") == "rational-quadratic"
    with pytest.raises(ValueError):
        normalize_family("matern")


def test_covariance_two_points():
    m = VariogramModel("exponential", 0, 0.16, 0.2)
    s = covariance_matrix(m, [[0, 0], [0.2, 0]])
    off = 0.16 * np.exp(-1)
    np.testing.assert_allclose(s, [[0.16, off], [off, 0.16]], rtol=1e-14)
    assert off == pytest.approx(0.058861, abs=1e-6)


def test_pure_nugget():
    m = VariogramModel("exponential", 0.3, 0.0, 0.2)
    locs = np.random.default_rng(0).uniform(size=(6, 2))
    np.testing.assert_array_equal(covariance_matrix(m, locs), 0.3 * np.eye(6))


def test_coincident_sites():
    m = VariogramModel("spherical", 0.1, 0.5, 0.3)
    s = covariance_matrix(m, [[0.2, 0.2], [0.2, 0.2], [0.9, 0.9]])
    assert s[0, 0] == pytest.approx(0.6) and s[0, 1] == pytest.approx(0.5)
    assert s[0, 2] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(VARIOGRAM_FAMILIES), st.floats(0, 1), st.floats(0.05, 2),
       st.floats(0.02, 1), st.integers(0, 1000))
def test_covariance_is_psd(family, c0, c1, a, s):
    locs = np.random.default_rng(s).uniform(size=(30, 2))
    sig = covariance_matrix(VariogramModel(family, c0, c1, a), locs)
    np.testing.assert_allclose(sig, sig.T)
    assert np.linalg.eigvalsh(sig).min() >= -1e-10 * sig.trace()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(VARIOGRAM_FAMILIES), st.floats(0.05, 2), st.floats(0.02, 1),
       st.floats(1e-3, 3))
def test_semivariance_identity(family, c1, a, h):
    m = VariogramModel(family, 0.0, c1, a)
    assert m.semivariance(h) == pytest.approx(c1 * (1 - m.correlation(h)), rel=1e-12, abs=1e-15)


def test_constant_residuals_zero_semivariance():
    locs = np.random.default_rng(1).uniform(size=(40, 2))
    emp = empirical_semivariogram(locs, np.full(40, 3.3))
    assert np.all(emp.gamma_hat == 0)


def test_two_point_semivariance():
    emp = empirical_semivariogram([[0, 0], [1, 0]], [1.0, 3.0], n_bins=2, max_lag=2.0)
    assert len(emp) == 1
    assert emp.gamma_hat[0] == 2.0 and emp.pair_counts[0] == 1


def test_iid_flat_at_sill():
    rng = np.random.default_rng(2)
    locs = rng.uniform(size=(5000, 2))
    emp = empirical_semivariogram(locs, rng.normal(size=5000))
    assert np.all(np.abs(emp.gamma_hat - 1) < 0.1)


def test_coincident_sites_no_pairs():
    with pytest.raises(NoPairsInRange):
        empirical_semivariogram([[1, 1], [1, 1], [1, 1]], [0.0, 1.0, 2.0])


@settings(max_examples=20, deadline=None)
@given(st.floats(-100, 100), st.integers(0, 1000))
def test_shift_invariance(c, s):
    rng = np.random.default_rng(s)
    locs = rng.uniform(size=(50, 2))
    r = rng.normal(size=50)
    a = empirical_semivariogram(locs, r)
    b = empirical_semivariogram(locs, r + c)
    np.testing.assert_allclose(a.gamma_hat, b.gamma_hat, rtol=1e-8, atol=1e-10)


def _synthetic(model, lags):
    return EmpiricalVariogram(lags, model.semivariance(lags), np.full(lags.size, 50))


@pytest.mark.parametrize("truth", [VariogramModel("exponential", 0.02, 0.14, 0.2),
                                   VariogramModel("spherical", 0.0, 1.0, 0.5),
                                   VariogramModel("rational-quadratic", 0.1, 0.4, 0.15)])
def test_round_trip_fit(truth):
    lags = np.linspace(0.03, 0.7, 13)
    fit = fit_variogram_wls(_synthetic(truth, lags), truth.family)
    np.testing.assert_allclose(fit.model.params, truth.params, rtol=1e-3, atol=1e-4)
    assert fit.objective < 1e-8


def test_flat_fit_is_nugget_dominated():
    lags = np.linspace(0.01, 0.1, 8)
    emp = EmpiricalVariogram(lags, np.full(8, 0.5), np.full(8, 30))
    fit = fit_variogram_wls(emp, "exponential")
    assert fit.model.sill == pytest.approx(0.5, rel=1e-3)
    assert fit.objective < 1e-6


def test_degenerate_fits_refuse():
    emp = EmpiricalVariogram([0.1, 0.2], [0.3, 0.3], [4, 4])
    with pytest.raises(VariogramFitFailed):
        fit_variogram_wls(emp)
    zero = EmpiricalVariogram([0.1, 0.2, 0.3], [0.0, 0.0, 0.0], [4, 4, 4])
    with pytest.raises(VariogramFitFailed):
        fit_variogram_wls(zero)


def test_fit_not_worse_than_start():
    rng = np.random.default_rng(5)
    locs = rng.uniform(size=(150, 2))
    emp = empirical_semivariogram(locs, rng.normal(size=150))
    start = VariogramModel("exponential", 0.3, 0.6, 0.2)
    fit = fit_variogram_wls(emp, "exponential", start=start)
    assert fit.objective <= wls_objective(emp, start) + 1e-12


def test_csv_output():
    emp = EmpiricalVariogram([0.1, 0.3], [0.5, 0.75], [3, 9])
    buf = io.StringIO()
    emp.to_csv(buf)
    assert buf.getvalue() == "lag,gamma,npairs\n0.1,0.5,3\n0.3,0.75,9\n"


def test_model_validation():
    with pytest.raises(ValueError):
        VariogramModel("exponential", -0.1, 1, 1)
    with pytest.raises(ValueError):
        VariogramModel("exponential", 0, 1, 0)


@pytest.mark.xfail(strict=True, reason="a single 225-site realization does not identify the family: "
                   "exponential has the lowest objective in about 30% of runs even on the true errors")
def test_exponential_selected_for_exponential_data():
    from spatial_gof.simulation import ScenarioConfig, generate_field
    from spatial_gof.trend import TrendModel, ols_fit

    cfg = ScenarioConfig(seed=31)
    wins = 0
    for r in range(50):
        d = generate_field(cfg, r).dataset
        emp = empirical_semivariogram(d.locations, d.responses - ols_fit(TrendModel(), d)(d.locations))
        objs = {f: fit_variogram_wls(emp, f).objective for f in VARIOGRAM_FAMILIES}
        wins += min(objs, key=objs.get) == "exponential"
    assert wins >= 40


def test_white_noise_fit_is_flat():
    rng = np.random.default_rng(12)
    locs = rng.uniform(size=(400, 2))
    emp = empirical_semivariogram(locs, 0.5 * rng.normal(size=400))
    fit = fit_variogram_wls(emp, "exponential")
    g = fit.model.semivariance(emp.bin_centers)
    assert fit.model.sill == pytest.approx(0.25, rel=0.15)
    assert np.ptp(g) < 0.25 * 0.2
