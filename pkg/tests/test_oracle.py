import math

import numpy as np
import pytest

from qrisk.dgp import DgpSpec, dgp2_cov, sample_with_stream
from qrisk.numcore import RngStream, normal_inv_cdf, normal_pdf
from qrisk.oracle import (
    gaussian_conditional, location_trace, mc_covariance_form, mc_risk, mc_risk_many, nested_trace,
    alt_ray_slope, population_coefficients, population_matrices, stratum_density,
)
from qrisk.solver import ModelSpec

DGP1 = DgpSpec(1, 500, 50, 0)


def test_zero_model_has_zero_risk():
    res = mc_risk(DGP1.with_n(60), ModelSpec((), intercept=False), 0.5, reps=5, eval_samples=10, seed=1)
    assert res.pr == 0.0 and res.optimism == 0.0


def test_mc_risk_deterministic_and_worker_invariant():
    models = [ModelSpec((1, 2)), ModelSpec()]
    a = mc_risk_many(DGP1.with_n(80), models, 0.5, reps=6, eval_samples=20, seed=3)
    b = mc_risk_many(DGP1.with_n(80), models, 0.5, reps=6, eval_samples=20, seed=3, workers=2)
    assert a == b
    single = mc_risk(DGP1.with_n(80), models[0], 0.5, reps=6, eval_samples=20, seed=3)
    assert single == a[0]


def test_mc_risk_argument_checks():
    with pytest.raises(ValueError):
        mc_risk(DGP1, ModelSpec(), 0.5, reps=1)
    with pytest.raises(ValueError):
        mc_risk(DGP1, ModelSpec(), 0.5, reps=3, eval_samples=0)


def test_intercept_only_optimism_positive_and_order_one_over_n():
    out = {}
    for n in (250, 1000):
        out[n] = mc_risk(DGP1.with_n(n), ModelSpec(), 0.5, reps=400, eval_samples=2000, seed=5)
        assert out[n].optimism > -2 * out[n].optimism_se
    a, b = (n * out[n].optimism for n in (250, 1000))
    se = math.hypot(250 * out[250].optimism_se, 1000 * out[1000].optimism_se)
    assert abs(a - b) < 3 * se
    assert a > 0 and b > 0


def test_population_coefficients_correct_model():
    for tau in (0.5, 0.8):
        th = population_coefficients(DgpSpec(1, 500, 6), ModelSpec((1, 2, 3, 4)), tau, seed=2)
        assert abs(th[0] - 2 * normal_inv_cdf(tau)) < 0.03
        assert np.max(np.abs(th[1:] - 1.0)) < 0.03


def test_population_coefficients_dgp3_x4():
    spec = DgpSpec(3, 500, 6)
    m = ModelSpec((1, 2, 3, 4))
    assert abs(population_coefficients(spec, m, 0.5, seed=1)[4]) < 0.03
    assert abs(population_coefficients(spec, m, 0.8, seed=1)[4] - 1.5 * normal_inv_cdf(0.8)) < 0.03


def test_population_matrices_single_draw():
    spec = DgpSpec(1, 500, 5)
    m = ModelSpec((1, 2))
    theta = np.array([0.1, 1.0, 1.0])
    D0, D1 = population_matrices(spec, m, 0.3, theta, mc_draws=1, seed=4)
    d = sample_with_stream(1, 1, 5, RngStream(4).child("matrices"))
    x = m.design(d.Z)[0]
    dens = normal_pdf((x @ theta - d.Z[0, :4].sum()) / 2.0) / 2.0
    phi = 0.3 - float(d.y[0] - x @ theta < 0)
    assert np.allclose(D0, dens * np.outer(x, x))
    assert np.allclose(D1, phi ** 2 * np.outer(x, x))


def test_population_trace_matches_location_closed_form():
    spec = DgpSpec(1, 500, 6)
    m = ModelSpec((1, 2, 3, 4))
    theta = np.array([0.0, 1, 1, 1, 1])
    D0, D1 = population_matrices(spec, m, 0.5, theta, mc_draws=200_000, seed=1)
    tr = np.trace(np.linalg.solve(D0, D1)) / 500
    assert tr == pytest.approx(0.0125331, rel=0.02)


def test_location_trace_examples():
    v = location_trace(0.5, 0.199471, 5, 500)
    assert abs(v - 0.0125331) < 1e-6
    assert location_trace(0.5, 0.199471, 10, 500) == pytest.approx(2 * v)
    with pytest.raises(ValueError):
        location_trace(0.5, 0.0, 1, 10)


def test_nested_trace_degenerate_case_is_location_trace():
    m = ModelSpec((1, 2, 3, 4))
    got = nested_trace(DGP1, m, m, 0.5, mc_draws=20_000)
    assert got == pytest.approx(location_trace(0.5, normal_pdf(0.0) / 2.0, 5, 500), rel=1e-10)


@pytest.mark.parametrize("j", [0, 2, 4])
def test_nested_trace_linear_in_size(j):
    base = tuple(range(1, j + 1))
    vals = [nested_trace(DGP1, ModelSpec(base), ModelSpec(base + tuple(range(5, 5 + e))), 0.5,
                         mc_draws=50_000, seed=1) for e in range(0, 6)]
    steps = np.diff(vals)
    slope = 0.25 / (500 * stratum_density(1, 50, j, 0.5))
    assert np.allclose(steps, slope, rtol=0.03)


def test_gaussian_conditional_variances():
    for j in range(5):
        coef, var = gaussian_conditional(1, 50, tuple(range(1, j + 1)))
        assert var == pytest.approx(8.0 - j)
        assert np.allclose(coef, 1.0)
    _, v2 = gaussian_conditional(2, 50, ())
    ones = np.zeros(50)
    ones[:4] = 1
    assert v2 == pytest.approx(ones @ dgp2_cov(50) @ ones + 12.384)


def test_nested_trace_rejects_bad_nesting():
    with pytest.raises(ValueError):
        nested_trace(DGP1, ModelSpec((1, 2)), ModelSpec((1,)), 0.5)
    with pytest.raises(ValueError):
        nested_trace(DgpSpec(3, 500), ModelSpec((1,)), ModelSpec((1,)), 0.5)


def test_alt_ray_slope_formula():
    assert alt_ray_slope(2, 0.5, 500) == pytest.approx(0.25 / (500 * normal_pdf(0.0) / math.sqrt(5.0)))


def test_covariance_form_close_to_trace_form():
    # intercept-only model, large n relative to |S|; tolerance covers MC noise at 600 reps
    n = 2000
    spec = DGP1.with_n(n)
    got = mc_covariance_form(spec, ModelSpec(), 0.5, reps=600, seed=2, theta=np.zeros(1))
    target = location_trace(0.5, normal_pdf(0.0) / math.sqrt(8.0), 1, n)
    assert got == pytest.approx(target, rel=0.2)


def test_covariance_form_two_reps_is_finite():
    v = mc_covariance_form(DGP1.with_n(50), ModelSpec((1,)), 0.5, reps=2, seed=1, theta=np.array([0.0, 1.0]))
    assert math.isfinite(v)
