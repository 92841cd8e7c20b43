import io

import numpy as np
import pytest

from spatial_gof.simulation import (
    CSV_COLUMNS,
    ScenarioConfig,
    asymptotic_study,
    binomial_band,
    empirical_covariance_check,
    generate_field,
    grid_locations,
    ks_to_normal,
    parse_scenarios,
    run_scenario,
    write_rows_csv,
)


def test_same_replicate_same_data():
    cfg = ScenarioConfig(seed=3, c=3)
    a, b = generate_field(cfg, 7), generate_field(cfg, 7)
    np.testing.assert_array_equal(a.dataset.responses, b.dataset.responses)
    assert not np.array_equal(a.dataset.responses, generate_field(cfg, 8).dataset.responses)


def test_random_design_deterministic():
    cfg = ScenarioConfig(design="random", size=60, seed=4)
    np.testing.assert_array_equal(generate_field(cfg, 2).dataset.locations,
                                  generate_field(cfg, 2).dataset.locations)


def test_vanishing_noise():
    cfg = ScenarioConfig(sigma=1e-8, c=5, trend="M2")
    s = generate_field(cfg, 0)
    np.testing.assert_allclose(s.dataset.responses, cfg.mean(s.dataset.locations), atol=1e-6)


def test_grid_conventions():
    g = grid_locations(15)
    assert g.min() == 0 and g.max() == 1
    assert np.sort(np.unique(g[:, 0]))[1] == pytest.approx(1 / 14)
    c = grid_locations(4, "centers")
    np.testing.assert_allclose(np.unique(c[:, 1]), [0.125, 0.375, 0.625, 0.875])


def test_error_moments():
    cfg = ScenarioConfig(seed=6)
    R = 500
    eps = np.array([generate_field(cfg, r).errors for r in range(R)])
    # mean of one site's errors and variance, against their sampling spread
    site = eps[:, 112]
    assert abs(site.mean()) < 3 * 0.4 / np.sqrt(R)
    assert abs(site.var() - 0.16) < 3 * 0.16 * np.sqrt(2 / R)


def test_covariance_round_trip():
    chk = empirical_covariance_check(ScenarioConfig(seed=2), R=500, n_lags=5)
    assert chk.analytic[0] == pytest.approx(0.16, rel=1e-15)
    assert chk.lags[1] == pytest.approx(1 / 14)
    assert chk.analytic[1] == pytest.approx(0.16 * np.exp(-(1 / 14) / 0.2), rel=1e-12)
    assert chk.analytic[1] == pytest.approx(0.11195, abs=1e-5)
    assert chk.max_z < 3


def test_white_noise_covariance():
    chk = empirical_covariance_check(ScenarioConfig(seed=2, nugget_frac=1.0), R=500, n_lags=3)
    np.testing.assert_array_equal(chk.analytic[1:], 0.0)
    assert chk.max_z < 3


def test_shrinking_range():
    cfg = ScenarioConfig(design="random", size=400, correlation="shrinking", lam=0.0005)
    assert cfg.effective_range == pytest.approx(5.0)
    assert ScenarioConfig(design="random", size=2500, correlation="shrinking",
                          lam=0.0005).effective_range == pytest.approx(0.8)


@pytest.mark.parametrize("bad", [dict(replicates=0), dict(sigma=0), dict(bootstrap_B=5),
                                 dict(bandwidths=()), dict(correlation="shrinking"),
                                 dict(design="hex")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ScenarioConfig(**bad)


def test_parse_config():
    text = """
[scenario]
side = 15
sigma = 0.8
range = 0.2
c = 0, 3, 5   # three cells
bandwidths = 0.6 0.8 1.0x0.6
replicates = 50
bootstrap_B = 99
seed = 42
"""
    cfgs = parse_scenarios(text)
    assert [c.c for c in cfgs] == [0, 3, 5]
    assert cfgs[0].bandwidths == ((0.6, 0.6), (0.8, 0.8), (1.0, 0.6))
    assert cfgs[0].bootstrap_B == 99 and cfgs[0].n == 225
    with pytest.raises(ValueError):
        parse_scenarios("[scenario]\nreplicates = 0\n")
    with pytest.raises(ValueError):
        parse_scenarios("[scenario]\ncolour = red\n")
    with pytest.raises(ValueError):
        parse_scenarios("[other]\nsigma = 1\n")


def _small(**kw):
    base = dict(size=8, replicates=6, bootstrap_B=19, seed=9, quad_points=12,
                bandwidths=((0.6, 0.6), (0.9, 0.9)))
    base.update(kw)
    return ScenarioConfig(**base)


def test_run_scenario_small_and_worker_independent():
    cfg = _small()
    a = run_scenario(cfg, workers=1)
    b = run_scenario(cfg, workers=2)
    assert a.used == 6 and a.proportions.shape == (2,)
    fa, fb = io.StringIO(), io.StringIO()
    write_rows_csv([a], fa)
    write_rows_csv([b], fb)
    assert fa.getvalue() == fb.getvalue()
    assert fa.getvalue().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_strong_signal_is_rejected():
    res = run_scenario(_small(c=40, sigma=0.1, size=10))
    assert np.all(res.proportions == 1.0)


def test_binomial_band():
    lo, hi = binomial_band(0.048, 200)
    assert lo <= 0.048 <= hi
    assert lo == pytest.approx(0.02) and hi == pytest.approx(0.08)


def test_asymptotic_study_smoke():
    cfg = ScenarioConfig(design="random", size=100, correlation="shrinking", lam=0.0005,
                         kernel="gaussian", bandwidths=((1.0, 1.0),), quad_points=10, seed=3)
    out = asymptotic_study(cfg, [100], R=1)
    assert out[100].shape == (1,) and np.isfinite(out[100][0])
    with pytest.raises(ValueError):
        asymptotic_study(ScenarioConfig(), [100], R=1)


def test_ks_distance():
    x = np.random.default_rng(0).normal(size=2000)
    assert ks_to_normal(x) < 0.05
    assert ks_to_normal(x + 2) > 0.5
