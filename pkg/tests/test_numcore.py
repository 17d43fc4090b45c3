import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qrisk.errors import NotPositiveDefiniteError
from qrisk.numcore import (
    RngStream, eig_extremes, normal_cdf, normal_inv_cdf, sample_student_t, solve_spd,
    t2_cdf, t2_inv_cdf, t2_pdf, trace_solve,
)

# recorded once from sample_student_t(2.0, RngStream(2024, 7), 8), then frozen
T2_GOLDEN = [1.9472908873432193, -2.004228724208061, -0.2932228245283279, 5.320293338764912,
             -8.657360258238235, 1.1720550738871727, 0.9945142771576467, -0.586565491637184]


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(1.959964) - 0.975) < 1e-6
    assert normal_cdf(-40.0) == 0.0


def test_normal_inv_cdf_examples():
    assert normal_inv_cdf(0.5) == 0.0
    assert abs(normal_inv_cdf(0.975) - 1.959964) < 1e-5
    v = normal_inv_cdf(1e-300)
    assert math.isfinite(v) and v < -30


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_normal_inv_cdf_domain(p):
    with pytest.raises(ValueError):
        normal_inv_cdf(p)


def test_cdf_monotone():
    assert np.all(np.diff(normal_cdf(np.linspace(-40, 40, 80001))) >= 0)


def test_inverse_roundtrip_where_representable():
    # below about -5.9 the lower tail is exact; above about +5.9, 1 - p is
    # a handful of ulps and the tail mass is lost when Phi(x) is rounded
    x = np.linspace(-8, 5.5, 3001)
    assert np.max(np.abs(normal_inv_cdf(normal_cdf(x)) - x)) < 1e-8


@pytest.mark.xfail(strict=True, reason="Phi(x) for x > ~5.9 rounds to within a few ulps of 1; "
                                       "no inverse can recover x to 1e-8 from a double")
def test_inverse_roundtrip_full_symmetric_range():
    x = np.linspace(-8, 8, 4001)
    assert np.max(np.abs(normal_inv_cdf(normal_cdf(x)) - x)) < 1e-8


def test_inv_cdf_against_scipy():
    p = np.concatenate([np.logspace(-15, -1, 50), np.linspace(0.05, 0.95, 91), 1 - np.logspace(-12, -1, 50)])
    ref = stats.norm.ppf(p)
    assert np.max(np.abs(normal_inv_cdf(p) - ref) / np.maximum(1, np.abs(ref))) < 1e-12


def test_solve_spd_examples():
    B = np.arange(6.0).reshape(3, 2)
    assert np.allclose(solve_spd(np.eye(3), B), B)
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]))


def test_solve_spd_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2))


def test_solve_spd_random_residuals():
    g = np.random.default_rng(0)
    for _ in range(1000):
        k = int(g.integers(1, 41))
        G = g.standard_normal((k + 5, k))
        A = G.T @ G + 1e-3 * np.eye(k)
        B = g.standard_normal((k, 3))
        X = solve_spd(A, B)
        assert np.linalg.norm(A @ X - B) <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(X) + 1e-10


def test_trace_solve_matches_unit_vectors():
    g = np.random.default_rng(1)
    G = g.standard_normal((30, 6))
    A = G.T @ G
    H = g.standard_normal((30, 6))
    B = H.T @ H
    manual = sum(np.linalg.solve(A, B[:, j])[j] for j in range(6))
    assert abs(trace_solve(A, B) - manual) < 1e-8


def test_eig_extremes_examples():
    assert eig_extremes(np.diag([1.0, 3.0])) == pytest.approx((1.0, 3.0))
    assert eig_extremes(np.eye(4)) == pytest.approx((1.0, 1.0))
    v = np.array([1.0, 2.0, 0.0])
    lo, hi = eig_extremes(np.outer(v, v))
    assert abs(lo) < 1e-12 and hi == pytest.approx(5.0)


def test_student_t_golden_and_deterministic():
    draws = sample_student_t(2.0, RngStream(2024, 7), 8)
    assert draws.tolist() == T2_GOLDEN
    assert np.array_equal(draws, sample_student_t(2.0, RngStream(2024, 7), 8))
    assert sample_student_t(2.0, RngStream(2024, 7)) == T2_GOLDEN[0]


def test_student_t_tail_probability():
    # 1.886 is the one-sided 0.90 point of t_2, so the two-sided mass is 0.20
    t = sample_student_t(2.0, RngStream(5), 100_000)
    assert abs(np.mean(t > 1.886) - 0.10) < 0.01
    assert abs(np.mean(np.abs(t) > 1.886) - 0.20) < 0.01


def test_t2_closed_forms():
    x = np.linspace(-30, 30, 121)
    assert np.allclose(t2_cdf(x), stats.t.cdf(x, 2), atol=1e-14)
    assert np.allclose(t2_pdf(x), stats.t.pdf(x, 2), atol=1e-14)
    for p in (0.01, 0.25, 0.5, 0.8, 0.999):
        assert abs(t2_inv_cdf(p) - stats.t.ppf(p, 2)) < 1e-9


def test_rng_stream_validation_and_children():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)
    s = RngStream(3)
    assert s.child("x") == s.child("x")
    assert s.child("x") != s.child("y")
    assert s.child(1, "train") != s.child("train", 1)
    assert np.array_equal(s.normal(5), RngStream(3).normal(5))


def test_stream_prefixes_do_not_collide():
    root = RngStream(11)
    prefixes = {root.child(i).uniform(size=16).tobytes() for i in range(10_000)}
    assert len(prefixes) == 10_000


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_any_uint64_key_is_valid(seed, sid):
    s = RngStream(seed, sid)
    assert np.isfinite(s.normal())
