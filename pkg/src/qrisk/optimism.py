"""Plug-in estimate of the expected optimism and the de-biased predictive risk.

The estimate is ``tr(D0^{-1} D1) / n`` where ``D0`` is Powell's uniform-kernel
sandwich (density-weighted Gram matrix) and ``D1`` the squared-score weighted
Gram matrix, both evaluated at the fitted residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateScaleError, SingularSandwichError
from .numcore import eig_extremes, normal_inv_cdf, normal_pdf, trace_solve
from .solver import ModelSpec, QuantileFit, check_loss, score

SINGULAR_EIG = 1e-10
TAU_CLAMP = (0.001, 0.999)
KAPPA_RULES = ("literal", "iqr134")


@dataclass(frozen=True)
class BandwidthInfo:
    h_n: float
    kappa: float
    c: float
    clamp_applied: bool = False


@dataclass(frozen=True)
class OptimismEstimate:
    bandwidth: BandwidthInfo
    trace: float
    b_hat: float
    d0_min_eig: float
    d0_max_eig: float


@dataclass(frozen=True)
class RiskReport:
    tau: float
    model: ModelSpec
    in_sample: float
    b_hat: float
    pr_debiased: float
    cv_risk: Optional[float] = None
    oracle_pr: Optional[float] = None
    estimate: Optional[OptimismEstimate] = field(default=None, compare=False)

    @classmethod
    def build(cls, tau, model, in_sample, b_hat, **kw):
        return cls(tau, model, in_sample, b_hat, in_sample + b_hat, **kw)


def rate_term(tau, n):
    """The n^{-1/5} quantile-scale bandwidth h_n."""
    x = normal_inv_cdf(tau)
    return n ** -0.2 * (4.5 * normal_pdf(x) ** 4 / (2.0 * x * x + 1.0) ** 2) ** 0.2


def residual_scale(residuals, rule="literal"):
    """min(sd, IQR), or min(sd, IQR/1.34) under ``rule="iqr134"``."""
    if rule not in KAPPA_RULES:
        raise ValueError(f"unknown kappa rule {rule!r}")
    r = np.asarray(residuals, dtype=float)
    sd = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
    q75, q25 = np.percentile(r, [75.0, 25.0])
    iqr = float(q75 - q25)
    if rule == "iqr134":
        iqr /= 1.34
    return min(sd, iqr)


def bandwidth_powell(fit: QuantileFit, n=None, kappa_rule="literal") -> BandwidthInfo:
    n = fit.n if n is None else n
    if n < 4:
        raise ValueError("bandwidth rule needs n >= 4")
    tau = fit.tau
    h_n = rate_term(tau, n)
    if np.ptp(fit.residuals) == 0.0:
        raise DegenerateScaleError()
    kappa = residual_scale(fit.residuals, kappa_rule)
    if kappa <= 0.0:
        raise DegenerateScaleError()
    lo, hi = tau - h_n, tau + h_n
    clamped = lo < TAU_CLAMP[0] or hi > TAU_CLAMP[1]
    lo, hi = max(lo, TAU_CLAMP[0]), min(hi, TAU_CLAMP[1])
    c = kappa * (normal_inv_cdf(hi) - normal_inv_cdf(lo))
    return BandwidthInfo(h_n, kappa, c, clamped)


def sandwich_d0(X, residuals, h):
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    n = X.shape[0]
    keep = np.abs(residuals) <= h
    Xk = X[keep]
    return Xk.T @ Xk / (2.0 * n * h)


def sandwich_d1(X, residuals, tau):
    n = X.shape[0]
    wts = score(residuals, tau) ** 2
    return (X * wts[:, None]).T @ X / n


def d0_hat(data, model: ModelSpec, fit: QuantileFit, h):
    return sandwich_d0(model.design(data.Z), fit.residuals, h)


def d1_hat(data, model: ModelSpec, fit: QuantileFit):
    return sandwich_d1(model.design(data.Z), fit.residuals, fit.tau)


def trace_estimate(D0, D1, n, bandwidth: BandwidthInfo) -> OptimismEstimate:
    lo, hi = eig_extremes(D0)
    if D0.shape[0] and lo <= SINGULAR_EIG:
        raise SingularSandwichError(lo)
    tr = trace_solve(D0, D1)
    return OptimismEstimate(bandwidth, tr, tr / n, lo, hi)


def optimism_from_design(X, fit: QuantileFit, h=None, kappa_rule="literal", h_scale=1.0):
    """Estimate on an explicit design matrix; ``h_scale`` multiplies the
    automatic bandwidth (used by the sensitivity sweeps)."""
    n = X.shape[0]
    if h is None:
        bw = bandwidth_powell(fit, n, kappa_rule)
        if h_scale != 1.0:
            bw = replace(bw, c=bw.c * h_scale)
    else:
        bw = BandwidthInfo(math.nan, math.nan, float(h), False)
    D0 = sandwich_d0(X, fit.residuals, bw.c)
    D1 = sandwich_d1(X, fit.residuals, fit.tau)
    return trace_estimate(D0, D1, n, bw)


def optimism_estimate(data, model: ModelSpec, fit: QuantileFit, h=None, kappa_rule="literal"):
    return optimism_from_design(model.design(data.Z), fit, h=h, kappa_rule=kappa_rule)


def in_sample_risk(data, model: ModelSpec, fit: QuantileFit):
    """Mean check loss of the fit minus that of the zero predictor."""
    tau = fit.tau
    return float(np.mean(check_loss(fit.residuals, tau)) - np.mean(check_loss(data.y, tau)))


def debiased_risk(data, model: ModelSpec, fit: QuantileFit, h=None, kappa_rule="literal") -> RiskReport:
    est = optimism_estimate(data, model, fit, h=h, kappa_rule=kappa_rule)
    return RiskReport.build(fit.tau, model, in_sample_risk(data, model, fit), est.b_hat, estimate=est)


def select_model(reports) -> ModelSpec:
    """Model with the smallest de-biased risk; ties go to the smaller model,
    then to the lexicographically smaller index list."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to select from")
    if len({r.tau for r in reports}) > 1:
        raise ValueError("reports mix different quantile levels")
    best = min(reports, key=lambda r: (r.pr_debiased, r.model.size, r.model.indices))
    return best.model
