"""Exception hierarchy.

``NumericalError`` subclasses map to CLI exit code 2; everything else that
derives from ``QriskError`` is a usage problem (exit code 1).
"""


class QriskError(Exception):
    pass


class NumericalError(QriskError):
    pass


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class RankDeficientError(NumericalError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"rank-deficient design; dependent columns: {self.columns}")


class NonConvergenceError(NumericalError):
    def __init__(self, iterations, gap):
        self.iterations = iterations
        self.gap = gap
        super().__init__(f"no convergence after {iterations} iterations (last gap {gap:.3e})")


class SingularSandwichError(NumericalError):
    def __init__(self, min_eig):
        self.min_eig = min_eig
        super().__init__(
            "singular density sandwich: widen bandwidth or shrink model "
            f"(min eigenvalue {min_eig:.3e})"
        )


class DegenerateScaleError(NumericalError):
    def __init__(self):
        super().__init__("degenerate residual scale")
