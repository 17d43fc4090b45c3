"""Ground truth for the risk estimators.

Monte Carlo evaluation of the predictive risk and expected optimism, the
covariance form, the population sandwich matrices and the closed forms for
correctly specified and nested location models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dgp import DgpId, DgpSpec, conditional_density, dgp2_cov, sample_with_stream, DGP2_NOISE_VAR
from .errors import NumericalError
from .numcore import RngStream, normal_inv_cdf, normal_pdf, trace_solve
from .parallel import pmap
from .solver import ModelSpec, check_loss, fit_design, score

DEFAULT_REPS = 10_000
DEFAULT_EVAL = 5
DEFAULT_BIG_N = 200_000


@dataclass(frozen=True)
class McRiskOracle:
    pr: float
    optimism: float
    pr_se: float
    optimism_se: float
    reps: int
    eval_samples: int


class ReplicationError(NumericalError):
    def __init__(self, rep, seed, err):
        self.rep = rep
        self.seed = seed
        super().__init__(f"replication {rep} (seed {seed}) failed: {err}")


def _risk_rep(args):
    dgp_id, p, n, models, tau, eval_samples, seed, rep = args
    root = RngStream(seed).child(rep)
    train = sample_with_stream(dgp_id, n, p, root.child("train"))
    test = sample_with_stream(dgp_id, eval_samples, p, root.child("eval"))
    base_in = float(np.mean(check_loss(train.y, tau)))
    base_out = float(np.mean(check_loss(test.y, tau)))
    out = []
    for m in models:
        try:
            f = fit_design(m.design(train.Z), train.y, tau, model=m)
        except NumericalError as err:
            raise ReplicationError(rep, seed, err) from err
        ins = float(np.mean(check_loss(f.residuals, tau))) - base_in
        pred = m.design(test.Z) @ f.theta
        oos = float(np.mean(check_loss(test.y - pred, tau))) - base_out
        out.append((oos, ins))
    return out


def _summarise(values, reps, eval_samples):
    v = np.asarray(values)
    oos, ins = v[:, 0], v[:, 1]
    diff = oos - ins
    root = math.sqrt(reps)
    sd = lambda a: float(np.std(a, ddof=1)) if reps > 1 else math.nan
    return McRiskOracle(float(oos.mean()), float(diff.mean()), sd(oos) / root, sd(diff) / root,
                        reps, eval_samples)


def mc_risk_draws(dgp: DgpSpec, models, tau, n=None, reps=DEFAULT_REPS, eval_samples=DEFAULT_EVAL,
                  seed=0, workers=1):
    """Per-replication (out-of-sample, in-sample) risks, shape (reps, models, 2)."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if eval_samples < 1:
        raise ValueError("eval_samples must be >= 1")
    n = dgp.n if n is None else n
    models = list(models)
    tasks = [(dgp.id, dgp.p, n, models, tau, eval_samples, seed, r) for r in range(reps)]
    return np.array(pmap(_risk_rep, tasks, workers), dtype=float).reshape(reps, len(models), 2)


def mc_risk_many(dgp: DgpSpec, models, tau, n=None, reps=DEFAULT_REPS, eval_samples=DEFAULT_EVAL,
                 seed=0, workers=1):
    """Monte Carlo risk for several models sharing the same replications.

    Replication ``r`` uses streams derived from ``(seed, r)`` only, so the
    value for a model does not depend on which other models are evaluated.
    """
    draws = mc_risk_draws(dgp, models, tau, n, reps, eval_samples, seed, workers)
    return [_summarise(draws[:, j], reps, eval_samples) for j in range(draws.shape[1])]


def mc_risk(dgp: DgpSpec, model: ModelSpec, tau, n=None, reps=DEFAULT_REPS, eval_samples=DEFAULT_EVAL,
            seed=0, workers=1) -> McRiskOracle:
    return mc_risk_many(dgp, [model], tau, n, reps, eval_samples, seed, workers)[0]


def population_coefficients(dgp: DgpSpec, model: ModelSpec, tau, big_n=DEFAULT_BIG_N, seed=0):
    """Coefficients of the population check-loss minimiser, approximated by
    one fit on a very large sample."""
    data = sample_with_stream(dgp.id, big_n, dgp.p, RngStream(seed).child("population"))
    return fit_design(model.design(data.Z), data.y, tau, model=model).theta


def mc_covariance_form(dgp: DgpSpec, model: ModelSpec, tau, n=None, reps=1000, seed=0,
                       theta=None, big_n=DEFAULT_BIG_N, workers=1):
    """Trace of Cov(mean_i z_i phi(y_i - z_i'theta), theta_hat - theta) over replications."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    n = dgp.n if n is None else n
    if theta is None:
        theta = population_coefficients(dgp, model, tau, big_n, seed)
    theta = np.asarray(theta, dtype=float)
    tasks = [(dgp.id, dgp.p, n, model, tau, theta, seed, r) for r in range(reps)]
    rows = pmap(_cov_rep, tasks, workers)
    g = np.array([r[0] for r in rows])
    d = np.array([r[1] for r in rows])
    gc = g - g.mean(axis=0)
    dc = d - d.mean(axis=0)
    return float(np.sum(gc * dc) / (reps - 1))


def _cov_rep(args):
    dgp_id, p, n, model, tau, theta, seed, rep = args
    data = sample_with_stream(dgp_id, n, p, RngStream(seed).child(rep, "train"))
    X = model.design(data.Z)
    try:
        f = fit_design(X, data.y, tau, model=model)
    except NumericalError as err:
        raise ReplicationError(rep, seed, err) from err
    g = X.T @ score(data.y - X @ theta, tau) / n
    return g, f.theta - theta


def population_matrices(dgp: DgpSpec, model: ModelSpec, tau, theta, mc_draws=200_000, seed=0):
    """Monte Carlo D0 (density weighted) and D1 (squared-score weighted) Gram matrices."""
    data = sample_with_stream(dgp.id, mc_draws, dgp.p, RngStream(seed).child("matrices"))
    X = model.design(data.Z)
    theta = np.asarray(theta, dtype=float)
    fitted = X @ theta
    dens = conditional_density(dgp.id, data.Z, fitted)
    w1 = score(data.y - fitted, tau) ** 2
    D0 = (X * dens[:, None]).T @ X / mc_draws
    D1 = (X * w1[:, None]).T @ X / mc_draws
    return 0.5 * (D0 + D0.T), 0.5 * (D1 + D1.T)


def location_trace(tau, f_at_quantile, size, n):
    """tau(1-tau)/f * size/n for a correctly specified location model."""
    if not f_at_quantile > 0:
        raise ValueError("density at the quantile must be positive")
    return tau * (1.0 - tau) / f_at_quantile * size / n


def _gaussian_design(dgp_id, p):
    dgp_id = DgpId.parse(dgp_id)
    beta = np.zeros(p)
    beta[:4] = 1.0
    if dgp_id is DgpId.DGP1:
        return np.eye(p), beta, 4.0
    if dgp_id is DgpId.DGP2:
        return dgp2_cov(p), beta, DGP2_NOISE_VAR
    raise ValueError(f"nested_trace needs a Gaussian location design (DGP1/DGP2), got {dgp_id.name}")


def gaussian_conditional(dgp_id, p, indices):
    """Coefficients and variance of y given the covariates ``indices`` (1-based)."""
    cov, beta, noise = _gaussian_design(dgp_id, p)
    s = [i - 1 for i in indices]
    total = float(beta @ cov @ beta) + noise
    if not s:
        return np.zeros(0), total
    cross = cov[np.ix_(s, range(p))] @ beta
    coef = np.linalg.solve(cov[np.ix_(s, s)], cross)
    return coef, total - float(cross @ coef)


def nested_trace(dgp: DgpSpec, small: ModelSpec, big: ModelSpec, tau, mc_draws=100_000, seed=0, n=None):
    """(tau(1-tau)/n) tr(D0(S1,S2)^{-1} D1(S2)) with the density of y given the
    small model's predictors, for Gaussian location designs."""
    if not set(small.indices) <= set(big.indices):
        raise ValueError("small model is not nested in the big model")
    if not big.intercept:
        raise ValueError("nested_trace needs an intercept in the big model")
    n = dgp.n if n is None else n
    p = dgp.p
    big.check(p)
    b2, v2 = gaussian_conditional(dgp.id, p, big.indices)
    b1, v1 = gaussian_conditional(dgp.id, p, small.indices)
    theta = np.concatenate([[math.sqrt(v2) * normal_inv_cdf(tau)], b2])
    Z = sample_with_stream(dgp.id, mc_draws, p, RngStream(seed).child("nested")).Z
    X = big.design(Z)
    m1 = Z[:, [i - 1 for i in small.indices]] @ b1 if small.indices else np.zeros(mc_draws)
    sd1 = math.sqrt(v1)
    dens = normal_pdf((X @ theta - m1) / sd1) / sd1
    D0 = (X * dens[:, None]).T @ X / mc_draws
    D1 = X.T @ X / mc_draws
    return tau * (1.0 - tau) / n * trace_solve(D0, D1)


def stratum_density(dgp_id, p, j, tau):
    """Density of y given the first ``j`` relevant covariates at its tau-quantile."""
    _, v = gaussian_conditional(dgp_id, p, tuple(range(1, j + 1)))
    return normal_pdf(normal_inv_cdf(tau)) / math.sqrt(v)


def alt_ray_slope(j, tau, n):
    """Ray slope taking phi_j as the N(0, j^2 + 1) density at zero.

    Reported next to the Gaussian-conditioning slope; not used as a target.
    """
    return tau * (1.0 - tau) / (n * normal_pdf(0.0) / math.sqrt(j * j + 1.0))
