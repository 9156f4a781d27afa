"""Likelihood ratio tests for exploratory factor analysis in high dimensions."""

__version__ = "0.1.0"

from .core_stats import (
    cholesky_lower,
    cov_to_corr,
    logdet_spd,
    sample_correlation,
    sample_covariance,
    trace_prod_inv,
)
from .distributions import ChiSquareRef, chisq_cdf, chisq_sf, chisq_upper_quantile
from .errors import (
    DegenerateColumnError,
    EfaLrtError,
    InvalidInputError,
    ModelSaturatedError,
    NotPositiveDefiniteError,
    SingularCorrelationError,
    UnsupportedCombinationError,
)
from .factor_mle import MleFit, SolverOptions, factor_dof, fit_factor_model
from .lrt import (
    HdCalibration,
    RegimeReport,
    RegimeThresholds,
    TestResult,
    bartlett_factor_t0,
    bartlett_factor_tk,
    bartlett_factor_tprime,
    hd_calibration_t0,
    hd_calibration_tprime,
    min_safe_sample_size,
    regime_diagnostic,
    test_given_sigma,
    test_k_factor,
    test_no_factor,
)
from .sampler import FactorModel, GeneratorSpec, build_example_model, sample
from .selection import SelectionResult, TrailEntry, select_num_factors
from .simulation import (
    SimConfig,
    SimGridResult,
    SimRow,
    load_config,
    run_histogram_summary,
    run_selection_grid,
    run_type1_grid,
)
