"""K-fold cross-validation estimates of predictive risk and optimism."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .numcore import RngStream
from .solver import ModelSpec, check_loss, fit_design


@dataclass(frozen=True)
class CvEstimate:
    k: int
    cv_risk: float
    cv_optimism: float
    fold_sizes: tuple
    in_sample: float


class FoldFitError(NumericalError):
    def __init__(self, fold, err):
        self.fold = fold
        super().__init__(f"fit failed in fold {fold}: {err}")


def make_folds(n, k, seed):
    """Seeded uniform permutation cut into ``k`` contiguous blocks whose sizes
    differ by at most one."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    stream = seed if isinstance(seed, RngStream) else RngStream(int(seed))
    perm = stream.child("cv-folds").generator().permutation(n)
    return [np.sort(b) for b in np.array_split(perm, k)]


def kfold_cv(data, model: ModelSpec, tau, k=10, seed=0, folds=None, X=None, in_sample=None) -> CvEstimate:
    """``folds`` (lists of row indices) overrides the seeded partition;
    ``in_sample`` skips the full-sample refit when the caller already has it."""
    n = data.n
    X = model.design(data.Z) if X is None else X
    if folds is None:
        folds = make_folds(n, k, seed)
    else:
        folds = [np.asarray(f, dtype=int) for f in folds]
        k = len(folds)
    base = check_loss(data.y, tau)
    total = 0.0
    mask = np.ones(n, dtype=bool)
    for j, rows in enumerate(folds):
        mask[:] = True
        mask[rows] = False
        try:
            f = fit_design(X[mask], data.y[mask], tau, model=model)
        except NumericalError as err:
            raise FoldFitError(j, err) from err
        held = data.y[rows] - X[rows] @ f.theta
        total += float(np.sum(check_loss(held, tau) - base[rows]))
    cv_risk = total / n
    if in_sample is None:
        try:
            full = fit_design(X, data.y, tau, model=model)
        except NumericalError as err:
            raise FoldFitError(-1, err) from err
        in_sample = float(np.mean(check_loss(full.residuals, tau)) - np.mean(base))
    ins = float(in_sample)
    return CvEstimate(k, cv_risk, cv_risk - ins, tuple(len(f) for f in folds), ins)
