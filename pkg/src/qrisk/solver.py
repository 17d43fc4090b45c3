"""Linear quantile regression by a Frisch-Newton interior-point method.

The fit solves the bounded-variable LP that is dual to the check-loss
problem,

    max_a  y'a   s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,

with Mehrotra predictor-corrector steps. The coefficients are the negated
equality multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr

from .errors import NonConvergenceError, RankDeficientError

STEP_DAMP = 0.99995
RANK_TOL = 1e-10


def check_loss(u, tau):
    """rho_tau(u) = u (tau - 1{u < 0}); works elementwise on arrays."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def score(u, tau):
    """phi_tau(u) = tau - 1{u < 0}; note score(0, tau) == tau."""
    u = np.asarray(u, dtype=float)
    out = tau - (u < 0).astype(float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ModelSpec:
    """Candidate model: 1-based predictor indices plus an intercept flag."""

    indices: tuple = ()
    intercept: bool = True

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise ValueError("predictor indices are 1-based")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "intercept", bool(self.intercept))

    @classmethod
    def parse(cls, cols, intercept=True):
        """Build from a ``"1,2,3"`` style string (empty means no predictors)."""
        if isinstance(cols, str):
            cols = [c for c in cols.replace(" ", "").split(",") if c]
        return cls(tuple(sorted(int(c) for c in cols)), intercept)

    @property
    def size(self):
        return len(self.indices)

    @property
    def n_params(self):
        return len(self.indices) + int(self.intercept)

    def label(self):
        body = "-".join(str(i) for i in self.indices) or "none"
        return ("c+" if self.intercept else "") + body

    def check(self, d):
        if self.indices and self.indices[-1] > d:
            raise ValueError(f"model uses column {self.indices[-1]} but data has {d}")

    def design(self, Z):
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        Z2 = Z[None, :] if single else Z
        self.check(Z2.shape[1])
        cols = Z2[:, [i - 1 for i in self.indices]]
        if self.intercept:
            cols = np.hstack([np.ones((Z2.shape[0], 1)), cols])
        return cols[0] if single else cols

    def __lt__(self, other):
        return (self.size, self.indices, self.intercept) < (other.size, other.indices, other.intercept)


@dataclass(frozen=True, eq=False)
class QuantileFit:
    tau: float
    theta: np.ndarray
    residuals: np.ndarray
    objective: float
    duality_gap: float
    iterations: int

    @property
    def n(self):
        return self.residuals.shape[0]


def _column_names(model, k):
    if model is None:
        return [f"col{j + 1}" for j in range(k)]
    return (["intercept"] if model.intercept else []) + [f"z{i}" for i in model.indices]


def check_rank(X, model=None):
    """Raise RankDeficientError naming the columns that a pivoted QR drops."""
    k = X.shape[1]
    if k == 0:
        return
    _, R, piv = qr(X, mode="economic", pivoting=True)
    norms = np.linalg.norm(X, axis=0)
    diag = np.abs(np.diag(R))
    bad = [int(piv[j]) for j in range(k) if diag[j] <= RANK_TOL * max(norms[piv[j]], 1e-300)]
    if norms.min() == 0.0:
        bad = sorted(set(bad) | set(np.flatnonzero(norms == 0.0).tolist()))
    if bad:
        names = _column_names(model, k)
        raise RankDeficientError([names[j] for j in sorted(bad)])


def _max_step(v, dv):
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.where(dv < 0, -v / dv, np.inf).min())


def _primal_objective(X, y, theta, tau):
    return float(np.sum(check_loss(y - X @ theta, tau)))


def _crossover(X, y, theta, tau):
    """Try the vertex through the k smallest-|residual| rows."""
    k = X.shape[1]
    r = np.abs(y - X @ theta)
    rows = np.argsort(r, kind="stable")[:k]
    try:
        cand = np.linalg.solve(X[rows], y[rows])
    except np.linalg.LinAlgError:
        return theta
    if _primal_objective(X, y, cand, tau) <= _primal_objective(X, y, theta, tau) + 1e-12 * (1.0 + np.abs(y).sum()):
        return cand
    return theta


def fit_design(X, y, tau, tol=1e-8, max_iter=100, crossover=False, model=None, rank_check=True):
    """Fit on an explicit design matrix ``X`` (n x k)."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if k == 0:
        res = y.copy()
        return QuantileFit(tau, np.zeros(0), res, float(np.mean(check_loss(res, tau))), 0.0, 0)
    if n < k:
        raise RankDeficientError(_column_names(model, k)[n:], f"n={n} is smaller than the {k} parameters")
    if rank_check:
        check_rank(X, model)

    b = (1.0 - tau) * X.sum(axis=0)
    x = np.full(n, 1.0 - tau)
    s = 1.0 - x
    # dual start from least squares; c = -y
    dual = -np.linalg.lstsq(X, y, rcond=None)[0]
    r = -y - X @ dual
    r = np.where(r == 0.0, 1e-3, r)
    z = np.maximum(r, 0.0)
    w = np.maximum(-r, 0.0)
    ysum = y.sum()

    it = 0
    gap = np.inf
    theta = -dual
    while True:
        theta = -dual
        primal = _primal_objective(X, y, theta, tau)
        dual_val = float(y @ x) - (1.0 - tau) * ysum
        gap = max(primal - dual_val, 0.0) / (1.0 + abs(dual_val))
        if gap <= tol:
            break
        if it >= max_iter:
            raise NonConvergenceError(it, gap)
        it += 1

        # affine scaling direction
        q = 1.0 / (z / x + w / s)
        r = -y - X @ dual
        rp = b - X.T @ x
        XQ = X * q[:, None]
        M = XQ.T @ X
        try:
            cf = cho_factor(M, lower=True, check_finite=False)
            solve = lambda v: cho_solve(cf, v, check_finite=False)
        except LinAlgError:
            solve = lambda v: np.linalg.lstsq(M, v, rcond=None)[0]
        ddual = solve(rp + XQ.T @ r)
        dx = q * (X @ ddual - r)
        dz = -z - (z / x) * dx
        dw = -w + (w / s) * dx
        fp = min(STEP_DAMP * min(_max_step(x, dx), _max_step(s, -dx)), 1.0)
        fd = min(STEP_DAMP * min(_max_step(z, dz), _max_step(w, dw)), 1.0)

        # Mehrotra centring and second-order correction
        mu_now = z @ x + w @ s
        mu_aff = (z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s - fp * dx)
        mu = mu_now * (mu_aff / mu_now) ** 3 / (2.0 * n)
        dxdz = dx * dz
        dsdw = -dx * dw
        corr = mu / x - mu / s - dxdz / x + dsdw / s
        ddual = solve(rp + XQ.T @ (r - corr))
        dx = q * (X @ ddual - r + corr)
        dz = (mu - dxdz) / x - z - (z / x) * dx
        dw = (mu - dsdw) / s - w + (w / s) * dx
        fp = min(STEP_DAMP * min(_max_step(x, dx), _max_step(s, -dx)), 1.0)
        fd = min(STEP_DAMP * min(_max_step(z, dz), _max_step(w, dw)), 1.0)

        x = x + fp * dx
        s = s - fp * dx
        dual = dual + fd * ddual
        z = z + fd * dz
        w = w + fd * dw

    if crossover:
        theta = _crossover(X, y, theta, tau)
    res = y - X @ theta
    return QuantileFit(tau, theta, res, float(np.mean(check_loss(res, tau))), gap, it)


def fit(data, model: ModelSpec, tau, tol=1e-8, max_iter=100, crossover=False):
    """Minimise the mean check loss of ``model`` on ``data``."""
    model.check(data.d)
    X = model.design(data.Z)
    if data.n < model.size + 2:
        raise ValueError(f"need n >= |S| + 2 observations, have n={data.n}")
    return fit_design(X, data.y, tau, tol=tol, max_iter=max_iter, crossover=crossover, model=model)


def predict(fit_: QuantileFit, model: ModelSpec, z):
    theta = np.asarray(fit_.theta)
    if theta.shape[0] != model.n_params:
        raise ValueError("fit and model have different numbers of parameters")
    z = np.asarray(z, dtype=float)
    out = model.design(z) @ theta
    return float(out) if np.ndim(out) == 0 else out
