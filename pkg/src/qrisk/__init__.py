"""Predictive risk and expected optimism for linear quantile regression."""

from .errors import (
    QriskError,
    NumericalError,
    NotPositiveDefiniteError,
    RankDeficientError,
    NonConvergenceError,
    SingularSandwichError,
    DegenerateScaleError,
)
from .numcore import RngStream, normal_cdf, normal_inv_cdf
from .dgp import DgpSpec, Dataset, sample, true_cqf
from .solver import ModelSpec, QuantileFit, check_loss, score, fit, predict
from .optimism import (
    BandwidthInfo,
    OptimismEstimate,
    RiskReport,
    bandwidth_powell,
    d0_hat,
    d1_hat,
    optimism_estimate,
    in_sample_risk,
    debiased_risk,
    select_model,
)

from .cv import CvEstimate, kfold_cv, make_folds
from .oracle import McRiskOracle, mc_risk, mc_risk_many, nested_trace, location_trace
from .harness import ExperimentConfig, parse_config, run_experiment

__version__ = "0.1.0"
