"""The four simulation designs and their true conditional quantiles."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numcore import RngStream, normal_inv_cdf, normal_pdf, sample_student_t, t2_inv_cdf, t2_pdf

DGP2_NOISE_VAR = 12.384
DGP2_RHO = 0.8


class DgpId(enum.IntEnum):
    DGP1 = 1
    DGP2 = 2
    DGP3 = 3
    DGP4 = 4

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        s = str(value).strip().upper()
        if s.startswith("DGP"):
            s = s[3:]
        try:
            return cls(int(s))
        except ValueError:
            raise ValueError(f"unknown DGP {value!r}") from None


@dataclass(frozen=True)
class DgpSpec:
    id: DgpId
    n: int
    p: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "id", DgpId.parse(self.id))
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if int(self.p) < 4:
            raise ValueError("p must be >= 4 (every design uses covariates 1..4)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_n(self, n):
        return DgpSpec(self.id, n, self.p, self.seed)


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        Z = np.ascontiguousarray(self.Z, dtype=float)
        if Z.ndim != 2 or y.ndim != 1 or Z.shape[0] != y.shape[0]:
            raise ValueError("Dataset needs y of length n and Z of shape (n, d)")
        if not (np.isfinite(y).all() and np.isfinite(Z).all()):
            raise ValueError("Dataset contains non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self):
        return self.Z.shape[0]

    @property
    def d(self):
        return self.Z.shape[1]

    def subset(self, rows):
        return Dataset(self.y[rows], self.Z[rows])

    def __eq__(self, other):
        return (isinstance(other, Dataset) and np.array_equal(self.y, other.y)
                and np.array_equal(self.Z, other.Z))

    def to_csv(self, fh=None):
        """Write ``y,z1,...,zd`` with 17 significant digits."""
        own = fh is None
        fh = io.StringIO() if own else fh
        fh.write(",".join(["y"] + [f"z{j + 1}" for j in range(self.d)]) + "\n")
        for yi, row in zip(self.y, self.Z):
            fh.write(",".join(format(v, ".17g") for v in (yi, *row)) + "\n")
        return fh.getvalue() if own else None

    @classmethod
    def from_csv(cls, fh):
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        expected = ["y"] + [f"z{j + 1}" for j in range(len(header) - 1)]
        if header != expected:
            raise ValueError(f"CSV header must be y,z1,...,zd; got {','.join(header)}")
        arr = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
        return cls(arr[:, 0], arr[:, 1:])


@lru_cache(maxsize=16)
def _dgp2_chol(p):
    idx = np.arange(p)
    sigma = DGP2_RHO ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(sigma)


def dgp2_cov(p):
    idx = np.arange(p)
    return DGP2_RHO ** np.abs(idx[:, None] - idx[None, :])


def draw_covariates(dgp_id, n, p, stream: RngStream):
    dgp_id = DgpId.parse(dgp_id)
    g = stream.child("x").generator()
    if dgp_id is DgpId.DGP3:
        return g.uniform(0.0, 2.0, size=(n, p))
    x = g.standard_normal((n, p))
    if dgp_id is DgpId.DGP2:
        x = x @ _dgp2_chol(p).T
    return x


def draw_noise(dgp_id, n, stream: RngStream):
    """Standardised noise; ``noise_scale`` supplies the design's scale."""
    dgp_id = DgpId.parse(dgp_id)
    s = stream.child("eps")
    if dgp_id is DgpId.DGP4:
        return sample_student_t(2.0, s, n)
    return s.generator().standard_normal(n)


def location(dgp_id, X):
    """Deterministic part of y (the part not multiplied by noise)."""
    dgp_id = DgpId.parse(dgp_id)
    X = np.asarray(X, dtype=float)
    base = X[..., 0] + X[..., 1] + X[..., 2]
    if dgp_id in (DgpId.DGP1, DgpId.DGP2):
        return base + X[..., 3]
    if dgp_id is DgpId.DGP4:
        return base + 4.0 * X[..., 2] * X[..., 3]
    return base


def noise_scale(dgp_id, X):
    dgp_id = DgpId.parse(dgp_id)
    X = np.asarray(X, dtype=float)
    if dgp_id is DgpId.DGP3:
        return 1.0 + 1.5 * X[..., 3]
    s = {DgpId.DGP1: 2.0, DgpId.DGP2: math.sqrt(DGP2_NOISE_VAR), DgpId.DGP4: 1.0}[dgp_id]
    return np.full(X.shape[:-1], s)


def noise_quantile(dgp_id, tau):
    """tau-quantile of the standardised noise draw."""
    if DgpId.parse(dgp_id) is DgpId.DGP4:
        return t2_inv_cdf(tau)
    return normal_inv_cdf(tau)


def noise_pdf(dgp_id, u):
    if DgpId.parse(dgp_id) is DgpId.DGP4:
        return t2_pdf(u)
    return normal_pdf(u)


def conditional_density(dgp_id, X, yval):
    """Density of y given the full covariate vector, evaluated at ``yval``."""
    scale = noise_scale(dgp_id, X)
    u = (np.asarray(yval, dtype=float) - location(dgp_id, X)) / scale
    return noise_pdf(dgp_id, u) / scale


def sample_with_stream(dgp_id, n, p, stream: RngStream) -> Dataset:
    X = draw_covariates(dgp_id, n, p, stream)
    eps = draw_noise(dgp_id, n, stream)
    y = location(dgp_id, X) + noise_scale(dgp_id, X) * eps
    return Dataset(y, X)


def sample(spec: DgpSpec, stream: RngStream | None = None) -> Dataset:
    """Draw a dataset; deterministic in ``spec.seed`` unless a stream is given."""
    stream = RngStream(spec.seed) if stream is None else stream
    return sample_with_stream(spec.id, spec.n, spec.p, stream)


def true_cqf(dgp_id, x, tau):
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 4:
        raise ValueError("x needs at least four coordinates")
    # DGP3 covariates live in [0, 2], so the scale 1 + 1.5 x4 is always positive
    out = location(dgp_id, x) + noise_scale(dgp_id, x) * noise_quantile(dgp_id, tau)
    return float(out) if np.ndim(out) == 0 else out
