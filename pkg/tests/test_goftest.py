import json

import numpy as np
import pytest

from spatial_gof.goftest import (
    AsymptoticInputs,
    NonpositiveVariance,
    QuadratureGrid,
    TnOperator,
    WeightFunction,
    asymptotic_constants,
    bootstrap_errors,
    bootstrap_test,
    compute_tn,
    p_value_from,
    prepare_bootstrap,
    rho_c_shrinking_exponential,
    significance_trace,
    standardized_statistic,
)
from spatial_gof.kernels import BandwidthMatrix, KernelSpec, kernel_eval
from spatial_gof.seeding import derive_seed
from spatial_gof.simulation import ScenarioConfig, generate_field
from spatial_gof.smoothing import SpatialDataset
from spatial_gof.trend import TrendModel

TRI = KernelSpec("triweight", 2)
GAU = KernelSpec("gaussian", 2)
LIN = TrendModel(1, 2)


def grid(side):
    t = np.linspace(0, 1, side)
    xx, yy = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


@pytest.fixture(scope="module")
def null_data():
    return generate_field(ScenarioConfig(seed=21), 0).dataset


def test_perfect_fit_statistic_zero():
    locs = grid(8)
    z = np.sin(4 * locs[:, 0]) * locs[:, 1]
    assert compute_tn(SpatialDataset(locs, z), z, TRI, BandwidthMatrix([0.5, 0.5])) == 0.0


def test_constant_offset():
    locs = grid(10)
    z = 1 + locs[:, 0]
    t = compute_tn(SpatialDataset(locs, z + 0.1), z, TRI, BandwidthMatrix([0.5, 0.5]),
                   WeightFunction(), QuadratureGrid.unit_square())
    assert t == pytest.approx(0.5, rel=1e-10)


def _ll(locs, z, x, h):
    w = np.array([kernel_eval(TRI, (p - x) / h) for p in locs])
    X = np.column_stack([np.ones(len(locs)), locs - x])
    return np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * z))[0]


def test_riemann_oracle_with_refined_grid():
    locs = grid(7)
    rng = np.random.default_rng(0)
    z = 1 + locs[:, 0] + 0.5 * np.cos(5 * locs[:, 1]) + 0.1 * rng.normal(size=49)
    fitted = 1 + locs[:, 0]
    h = np.array([0.5, 0.6])
    t = compute_tn(SpatialDataset(locs, z), fitted, TRI, BandwidthMatrix(h),
                   q=QuadratureGrid.unit_square(30))
    m = 60
    c = (np.arange(m) + 0.5) / m
    diff = [_ll(locs, z - fitted, np.array([a, b]), h) for a in c for b in c]
    oracle = 49 * np.sqrt(np.prod(h)) * np.sum(np.square(diff)) / m ** 2
    assert t == pytest.approx(oracle, rel=0.01)


def test_operator_batches_columns():
    locs = grid(6)
    op = TnOperator(locs, TRI, BandwidthMatrix([0.6, 0.6]), q=QuadratureGrid.unit_square(10))
    r = np.random.default_rng(1).normal(size=(36, 4))
    np.testing.assert_allclose(op(r), [op(r[:, j]) for j in range(4)], rtol=1e-12)


def test_box_weight_restricts_domain():
    locs = grid(10)
    q = QuadratureGrid.unit_square(20)
    h = BandwidthMatrix([0.5, 0.5])
    data = SpatialDataset(locs, np.full(100, 0.1))
    half = WeightFunction.indicator([(0, 0.5), (0, 1)])
    assert compute_tn(data, np.zeros(100), TRI, h, half, q) == pytest.approx(0.25, rel=1e-10)


def test_p_value_formula():
    assert p_value_from(1.0, [0.5, 1.0, 2.0, 0.1]) == pytest.approx(3 / 5)
    assert p_value_from(10.0, np.zeros(99)) == pytest.approx(0.01)


def test_bootstrap_bounds_and_determinism(null_data):
    h = BandwidthMatrix([0.8, 0.8])
    a = bootstrap_test(null_data, LIN, "exponential", TRI, h, B=39, seed=5)
    b = bootstrap_test(null_data, LIN, "exponential", TRI, h, B=39, seed=5)
    assert 1 / 40 <= a.p_value <= 1
    assert a.t_n == b.t_n and a.p_value == b.p_value
    np.testing.assert_array_equal(a.bootstrap_stats, b.bootstrap_stats)
    d = json.loads(a.to_json())
    assert d["B"] == 39 and d["seed"] == 5


def test_bootstrap_requires_enough_draws(null_data):
    with pytest.raises(ValueError):
        bootstrap_test(null_data, LIN, "exponential", TRI, BandwidthMatrix([0.8, 0.8]), B=10)


def test_bootstrap_draws_are_per_replicate(null_data):
    setup = prepare_bootstrap(null_data, LIN)
    a = bootstrap_errors(setup, 20, seed=3)
    b = bootstrap_errors(setup, 30, seed=3)
    np.testing.assert_array_equal(a, b[:, :20])
    assert abs(setup.whitened.mean()) < 1e-12


def test_perfect_fit_bootstrap():
    locs = grid(8)
    data = SpatialDataset(locs, 2 + locs[:, 0] - 3 * locs[:, 1])
    rep = bootstrap_test(data, LIN, "exponential", TRI, BandwidthMatrix([0.6, 0.6]), B=19, seed=1)
    assert rep.t_n == 0.0 and rep.p_value == 1.0 and rep.perfect_fit
    trace = significance_trace(data, LIN, "spherical", TRI,
                               [BandwidthMatrix([h, h]) for h in (0.5, 0.7, 0.9)], B=19, seed=1)
    assert [e.p_value for e in trace] == [1.0, 1.0, 1.0]


def test_singleton_trace_equals_single_test(null_data):
    h = BandwidthMatrix([0.7, 0.9])
    (entry,) = significance_trace(null_data, LIN, "exponential", TRI, [h], B=29, seed=8)
    rep = bootstrap_test(null_data, LIN, "exponential", TRI, h, B=29, seed=derive_seed(8, 0))
    assert entry.p_value == rep.p_value and entry.report.t_n == rep.t_n


def test_trace_records_failures(null_data):
    grid_h = [BandwidthMatrix([0.8, 0.8]), BandwidthMatrix([0.01, 0.01])]
    out = significance_trace(null_data, LIN, "exponential", TRI, grid_h, B=19, seed=2)
    assert out[0].p_value is not None
    assert out[1].p_value is None and "InsufficientLocalData" in out[1].error


def test_asymptotic_constants_example():
    inputs = AsymptoticInputs(sigma2=0.4, rho_c=0.0)
    b0, b1, v = asymptotic_constants(inputs, GAU, BandwidthMatrix([0.6, 0.6]))
    assert b0 == pytest.approx(0.4 / (4 * np.pi) / 0.6, rel=1e-10)
    assert b0 == pytest.approx(0.05305, abs=1e-5)
    assert v == pytest.approx(2 * 0.16 / (8 * np.pi), rel=1e-10)
    assert v == pytest.approx(0.012732, abs=1e-6)
    assert b1 == 0.0


def test_fixed_design_matches_uniform_on_unit_square():
    h = BandwidthMatrix([0.5, 0.4])
    u = asymptotic_constants(AsymptoticInputs(0.3, 2.0), GAU, h)
    f = asymptotic_constants(AsymptoticInputs(0.3, 2.0, density="fixed"), GAU, h)
    np.testing.assert_allclose(u, f, rtol=1e-12)


def test_rho_c_terms():
    b0, _, v = asymptotic_constants(AsymptoticInputs(1.0, rho_c=1.0), GAU, BandwidthMatrix([1, 1]))
    k2, k4 = 1 / (4 * np.pi), 1 / (8 * np.pi)
    assert b0 == pytest.approx(2 * k2, rel=1e-10)
    assert v == pytest.approx(2 * k4 * (1 + 2 + 4), rel=1e-10)
    assert rho_c_shrinking_exponential(0.0005) == pytest.approx(2000)


def test_local_alternative_bias_constant_direction():
    # K_H * g = 1 for g = 1 away from the boundary of the integration (kernel has full mass)
    b = asymptotic_constants(AsymptoticInputs(1.0, g_dev=lambda x: np.ones(len(x))),
                             TRI, BandwidthMatrix([0.2, 0.2]))[1]
    assert b == pytest.approx(1.0, rel=1e-6)


def test_standardized_statistic():
    assert standardized_statistic(1.5, (1.0, 0.5, 3.0)) == 0.0
    assert standardized_statistic(2.5, (0.5, 0.0, 4.0)) == 1.0
    with pytest.raises(NonpositiveVariance):
        standardized_statistic(1.0, (0.0, 0.0, 0.0))
