from .kernels import HyperBox, MaternParams, matern_kernel, matern_spectral_density
from .rule import QuadratureRule, embedded_rule
from .quadrature import build_rule, validate_rule
from .fourier import FourierExpansion, effective_kernel, l2_kernel_error, sample_prior
from .nufft import ExpSumPlan, direct_exp_sums
from .regression import (
    Dataset,
    RegressionFit,
    fit,
    fit_hyperparameters,
    gradient_log_likelihood,
    log_marginal_likelihood,
    predict,
)
from .store import RuleStore
from .stages import BuildReport, StageHook, Sentry
from .logger import get_logger
from .errors import (
    BuildError,
    DomainError,
    NufftError,
    NumericalError,
    RuleFormatError,
    SpecGPError,
)

__all__ = [
    "HyperBox",
    "MaternParams",
    "matern_kernel",
    "matern_spectral_density",
    "QuadratureRule",
    "embedded_rule",
    "build_rule",
    "validate_rule",
    "FourierExpansion",
    "effective_kernel",
    "l2_kernel_error",
    "sample_prior",
    "ExpSumPlan",
    "direct_exp_sums",
    "Dataset",
    "RegressionFit",
    "fit",
    "fit_hyperparameters",
    "gradient_log_likelihood",
    "log_marginal_likelihood",
    "predict",
    "RuleStore",
    "BuildReport",
    "StageHook",
    "Sentry",
    "get_logger",
    "SpecGPError",
    "DomainError",
    "RuleFormatError",
    "BuildError",
    "NufftError",
    "NumericalError",
]
