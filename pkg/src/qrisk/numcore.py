"""Numerical primitives: normal distribution, SPD solves, eigenvalue
extremes and a keyed counter-based random stream."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack
from scipy.special import ndtr

from .errors import NotPositiveDefiniteError

_MASK64 = (1 << 64) - 1
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation coefficients
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT2PI
    return out if out.ndim else float(out)


def normal_cdf(x):
    """Standard normal CDF, accurate to double precision (erfc based)."""
    out = ndtr(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def _acklam(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def _inv_scalar(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal_inv_cdf requires 0 < p < 1, got {p!r}")
    x = _acklam(p)
    # one Halley polish step; the upper tail is polished through the lower
    # tail so that 1 - p round-off does not leak in
    if p > 0.5:
        e = ndtr(-x) - (1.0 - p)
        u = -e * _SQRT2PI * math.exp(0.5 * x * x)
    else:
        e = ndtr(x) - p
        u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_inv_cdf(p):
    """Inverse standard normal CDF for p in (0, 1).

    Scalars return a float; arrays are evaluated elementwise.
    """
    if np.ndim(p) == 0:
        return _inv_scalar(float(p))
    arr = np.asarray(p, dtype=float)
    return np.array([_inv_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


def solve_spd(A, B):
    """Solve ``A X = B`` for symmetric positive-definite ``A`` via Cholesky.

    Raises NotPositiveDefiniteError carrying the 1-based index of the first
    failing pivot; no regularisation is attempted.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if A.shape[0] == 0:
        return np.zeros_like(B)
    c, info = lapack.dpotrf(A, lower=True, clean=True, overwrite_a=False)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    vec = B.ndim == 1
    x, info = lapack.dpotrs(c, B[:, None] if vec else B, lower=True)
    if info != 0:
        raise ValueError(f"dpotrs failed with info={info}")
    return x[:, 0] if vec else x


def trace_solve(A, B):
    """tr(A^{-1} B) for SPD ``A`` without forming the inverse."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return 0.0
    return float(np.trace(solve_spd(A, B)))


def eig_extremes(A):
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return (math.inf, -math.inf)
    w = np.linalg.eigvalsh(A)
    return float(w[0]), float(w[-1])


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _tag_value(tag):
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8")) | (1 << 40)
    return int(tag) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a Philox stream keyed by ``(seed, stream_id)``.

    Every call to :meth:`generator` restarts the stream at counter zero, so
    the same descriptor always yields the same draws.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64)))

    def child(self, *tags) -> "RngStream":
        """Derive an independent stream from integer or string tags."""
        h = _splitmix64(self.stream_id)
        for t in tags:
            h = _splitmix64(h ^ _tag_value(t))
        return RngStream(self.seed, h)

    def normal(self, size=None):
        return self.generator().standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator().uniform(low, high, size)


def sample_student_t(df, rng: RngStream, size=None):
    """Student-t draws as N(0,1) / sqrt(chi2(df)/df) from two substreams."""
    if not df > 0:
        raise ValueError("df must be positive")
    z = rng.child("t-normal").generator().standard_normal(size)
    v = rng.child("t-chisq").generator().chisquare(df, size)
    return z / np.sqrt(v / df)


def t2_cdf(x):
    """CDF of Student-t with 2 degrees of freedom (closed form)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 + x / (2.0 * np.sqrt(2.0 + x * x))
    return out if out.ndim else float(out)


def t2_pdf(x):
    x = np.asarray(x, dtype=float)
    out = (2.0 + x * x) ** -1.5
    return out if out.ndim else float(out)


def t2_inv_cdf(p, tol=1e-12):
    """Inverse t2 CDF by bisection on the closed-form CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = -1.0, 1.0
    while t2_cdf(lo) > p:
        lo *= 2.0
    while t2_cdf(hi) < p:
        hi *= 2.0
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if t2_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
