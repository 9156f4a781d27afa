"""
Likelihood ratio tests for the number of factors.

Three statistics share one calibration layer:

* ``test_no_factor``   T0 = -(N-1) log|R|, the complete-independence test;
* ``test_k_factor``    Tk, fit of the ML k-factor model against the saturated model;
* ``test_given_sigma`` T', equality of the covariance to a fully specified matrix.

Each can be referred to its chi-square limit with or without the Bartlett
factor, and T0 and T' additionally to the high-dimensional normal limit of
(T + n mu) / (n sigma), n = N - 1. All tests reject for large statistics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core_stats import (
    as_data_matrix,
    logdet_spd,
    sample_correlation,
    sample_covariance,
    trace_prod_inv,
)
from .distributions import chisq_sf, std_normal_sf
from .errors import (
    InvalidInputError,
    ModelSaturatedError,
    NotPositiveDefiniteError,
    SingularCorrelationError,
    UnsupportedCombinationError,
)
from .factor_mle import SolverOptions, factor_dof, fit_factor_model
from .sampler import FactorModel

CORRECTIONS = ("none", "bartlett")
CALIBRATIONS = ("chisq", "hd-normal")
VERDICTS = ("safe", "borderline", "failing")


@dataclass(frozen=True)
class RegimeThresholds:
    """Ratio cut-offs: below `safe` is safe, at or above `failing` is failing."""

    safe: float = 0.1
    failing: float = 1.0

    def __post_init__(self):
        if not 0 < self.safe <= self.failing:
            raise InvalidInputError("thresholds must satisfy 0 < safe <= failing")

    def verdict(self, ratio: float) -> str:
        if ratio < self.safe:
            return "safe"
        if ratio < self.failing:
            return "borderline"
        return "failing"


@dataclass(frozen=True)
class RegimeReport:
    N: int
    p: int
    epsilon: float
    ratio_sq: float
    ratio_cube: float
    chisq_valid: str
    bartlett_valid: str
    thresholds: RegimeThresholds = RegimeThresholds()

    def verdict_for(self, correction: str) -> str:
        return self.bartlett_valid if correction == "bartlett" else self.chisq_valid


def regime_diagnostic(N: int, p: int, thresholds: RegimeThresholds | None = None) -> RegimeReport:
    """
    Phase-transition verdicts for sample size N and dimension p.

    The uncorrected chi-square limit needs p^2/N -> 0 and the Bartlett
    corrected one p^3/N^2 -> 0; the verdicts grade the two ratios against
    finite cut-offs (0.1 and 1 by default).
    """
    if N < 2 or p < 1:
        raise InvalidInputError(f"need N >= 2 and p >= 1, got N={N}, p={p}")
    th = thresholds or RegimeThresholds()
    ratio_sq = p * p / N
    ratio_cube = p**3 / N**2
    chisq = th.verdict(ratio_sq)
    bart = th.verdict(ratio_cube)
    # p^3/N^2 <= p^2/N whenever p <= N; beyond that both are failing anyway
    if VERDICTS.index(bart) > VERDICTS.index(chisq):
        bart = chisq
    return RegimeReport(N, p, math.log(p) / math.log(N), ratio_sq, ratio_cube, chisq, bart, th)


def min_safe_sample_size(p: int, thresholds: RegimeThresholds | None = None) -> tuple[int, int]:
    """Sample sizes at which p^2/N and p^3/N^2 reach the safe cut-off."""
    th = thresholds or RegimeThresholds()
    n_chisq = math.ceil(p * p / th.safe - 1e-9)
    n_bart = math.ceil(math.sqrt(p**3 / th.safe) - 1e-9)
    return n_chisq, n_bart


@dataclass(frozen=True)
class HdCalibration:
    mu: float
    sigma: float
    n: int


def _hd_common(N: int, p: int) -> tuple[int, float]:
    n = N - 1
    if p < 1:
        raise InvalidInputError(f"p must be at least 1, got {p}")
    if p > n - 1:
        raise InvalidInputError(f"normal calibration needs p <= N - 2, got N={N}, p={p}")
    r = p / n
    # s = -(r + log(1 - r)) = sum_{j>=2} r^j / j, summed directly when r is small
    if r < 0.1:
        s, term, j = 0.0, r, 1
        while True:
            j += 1
            term *= r
            inc = term / j
            s += inc
            if inc < 1e-18 * s:
                break
    else:
        s = -(r + math.log1p(-r))
    return n, s


def hd_calibration_t0(N: int, p: int) -> HdCalibration:
    """
    Centering and scale for T0 under the normal limit.

    mu = (p - n + 1/2) log(1 - p/n) - (n - 1) p / n,
    sigma^2 = -2 {p/n + log(1 - p/n)}, with n = N - 1.
    """
    n, s = _hd_common(N, p)
    # same as the closed form above, rearranged to avoid cancellation
    mu = p / (2 * n) - p * p / n + (n - p - 0.5) * s
    return HdCalibration(mu, math.sqrt(2 * s), n)


def hd_calibration_tprime(N: int, p: int) -> HdCalibration:
    """mu = -p + (p - n + 1/2) log(1 - p/n); sigma as for T0."""
    n, s = _hd_common(N, p)
    mu = -p / (2 * n) - p * p / n + (n - p - 0.5) * s
    return HdCalibration(mu, math.sqrt(2 * s), n)


def bartlett_factor_t0(N: int, p: int) -> float:
    return 1.0 - (2 * p + 5) / (6 * (N - 1))


def bartlett_factor_tk(N: int, p: int, k: int) -> float:
    return 1.0 - (2 * p + 5 + 4 * k) / (6 * (N - 1))


def bartlett_factor_tprime(N: int, p: int) -> float:
    return 1.0 - (2 * p * p + 3 * p - 1) / (6 * (N - 1) * (p + 1))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    corrected_statistic: float
    correction: str
    calibration: str
    df: float
    rho: float
    p_value: float
    regime: RegimeReport
    # Bartlett factor of this test whether or not it was applied; `rho` is the
    # factor actually applied (1 without correction)
    bartlett_factor: float = 1.0
    alpha: float = 0.05
    z: float | None = None
    hd: HdCalibration | None = None
    converged: bool = True
    warnings: tuple[str, ...] = field(default=())

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.p_value < self.alpha


def _check_modes(correction: str, calibration: str, alpha: float) -> None:
    if correction not in CORRECTIONS:
        raise InvalidInputError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    if calibration not in CALIBRATIONS:
        raise InvalidInputError(f"calibration must be one of {CALIBRATIONS}, got {calibration!r}")
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")


def calibrate(statistic, df, rho, correction, calibration, hd=None):
    """
    p-value of a statistic under the requested calibration.

    Returns (rho_applied, corrected_statistic, p_value, z). Under the normal calibration
    the Bartlett factor scales both the statistic and its centering, so z
    does not depend on the correction.
    """
    rho_used = rho if correction == "bartlett" else 1.0
    corrected = rho_used * statistic
    if calibration == "chisq":
        return rho_used, corrected, chisq_sf(df, max(corrected, 0.0)), None
    z = (statistic + hd.n * hd.mu) / (hd.n * hd.sigma)
    return rho_used, corrected, std_normal_sf(z), z


def _existence_warnings(N: int, p: int, margin: int) -> list[str]:
    if N < p + margin:
        return [f"N={N} < p+{margin}={p + margin}: outside the range where the limit theory applies"]
    return []


def _regime_warnings(report: RegimeReport, correction: str, calibration: str) -> list[str]:
    if calibration != "chisq":
        return []
    verdict = report.verdict_for(correction)
    if verdict != "failing":
        return []
    if correction == "bartlett":
        return [
            f"p^3/N^2 = {report.ratio_cube:.3g} >= {report.thresholds.failing:g}: "
            "the Bartlett-corrected chi-square approximation is unreliable"
        ]
    return [
        f"p^2/N = {report.ratio_sq:.3g} >= {report.thresholds.failing:g}: "
        "the chi-square approximation is unreliable"
    ]


def no_factor_statistic(data) -> float:
    """T0 = -(N - 1) log|R| for sample correlation R."""
    x = as_data_matrix(data)
    r = sample_correlation(x)
    try:
        ld = logdet_spd(r)
    except NotPositiveDefiniteError as exc:
        raise SingularCorrelationError(exc.pivot, "sample correlation matrix is singular") from exc
    return -(x.shape[0] - 1) * ld


def test_no_factor(
    data,
    correction: str = "none",
    calibration: str = "chisq",
    alpha: float = 0.05,
    thresholds: RegimeThresholds | None = None,
) -> TestResult:
    """Test H0: no common factor (the correlation matrix is the identity)."""
    _check_modes(correction, calibration, alpha)
    x = as_data_matrix(data)
    N, p = x.shape
    if p < 2:
        raise InvalidInputError("the no-factor test needs p >= 2 (f0 = 0 otherwise)")
    t0 = no_factor_statistic(x)
    df = p * (p - 1) / 2
    rho = bartlett_factor_t0(N, p)
    hd = hd_calibration_t0(N, p) if calibration == "hd-normal" else None
    rho_used, corrected, pval, z = calibrate(t0, df, rho, correction, calibration, hd)
    report = regime_diagnostic(N, p, thresholds)
    warns = _existence_warnings(N, p, 5) + _regime_warnings(report, correction, calibration)
    return TestResult(t0, corrected, correction, calibration, df, rho_used, pval, report, rho,
                      alpha, z, hd, True, tuple(warns))


def k_factor_statistic(s: np.ndarray, sigma_k: np.ndarray, N: int) -> float:
    p = s.shape[0]
    return (N - 1) * (logdet_spd(sigma_k) - logdet_spd(s) + trace_prod_inv(s, sigma_k) - p)


def test_k_factor(
    data,
    k: int,
    correction: str = "none",
    alpha: float = 0.05,
    calibration: str = "chisq",
    thresholds: RegimeThresholds | None = None,
    solver: SolverOptions | None = None,
) -> TestResult:
    """
    Test H0: at most k common factors, with loadings and uniquenesses fitted by ML.

    A fit that fails to converge still yields a statistic, flagged through
    ``converged=False`` and a warning.
    """
    _check_modes(correction, calibration, alpha)
    if calibration == "hd-normal":
        raise UnsupportedCombinationError(
            "no normal limit is available for the k-factor statistic with estimated loadings"
        )
    x = as_data_matrix(data)
    N, p = x.shape
    df = factor_dof(p, k)
    if df <= 0:
        raise ModelSaturatedError(f"k={k} factors leave {df:g} degrees of freedom at p={p}")
    s = sample_covariance(x)
    if k == 0:
        # the ML zero-factor fit is diag(S), so Tk reduces to T0
        fit_sigma = np.diag(np.diag(s))
        converged = True
    else:
        fit = fit_factor_model(s, k, solver)
        fit_sigma = fit.sigma
        converged = fit.converged
    tk = k_factor_statistic(s, fit_sigma, N)
    rho = bartlett_factor_tk(N, p, k)
    rho_used, corrected, pval, _ = calibrate(tk, df, rho, correction, "chisq")
    report = regime_diagnostic(N, p, thresholds)
    warns = _existence_warnings(N, p, 5) + _regime_warnings(report, correction, "chisq")
    if not converged:
        warns.append(f"maximum likelihood fit with k={k} did not converge")
    return TestResult(tk, corrected, correction, "chisq", df, rho_used, pval, report, rho,
                      alpha, None, None, converged, tuple(warns))


def given_sigma_statistic(data, sigma0: np.ndarray) -> float:
    x = as_data_matrix(data)
    s = sample_covariance(x)
    return k_factor_statistic(s, sigma0, x.shape[0])


def test_given_sigma(
    data,
    sigma0,
    correction: str = "none",
    calibration: str = "chisq",
    alpha: float = 0.05,
    thresholds: RegimeThresholds | None = None,
) -> TestResult:
    """Test H0: Sigma equals the fully specified `sigma0` (a matrix or a FactorModel)."""
    _check_modes(correction, calibration, alpha)
    x = as_data_matrix(data)
    N, p = x.shape
    if isinstance(sigma0, FactorModel):
        sigma0 = sigma0.implied_sigma()
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape != (p, p):
        raise InvalidInputError(f"sigma0 has shape {sigma0.shape}, data have p={p}")
    tp = given_sigma_statistic(x, sigma0)
    df = p * (p + 1) / 2
    rho = bartlett_factor_tprime(N, p)
    hd = hd_calibration_tprime(N, p) if calibration == "hd-normal" else None
    rho_used, corrected, pval, z = calibrate(tp, df, rho, correction, calibration, hd)
    report = regime_diagnostic(N, p, thresholds)
    warns = _existence_warnings(N, p, 2) + _regime_warnings(report, correction, calibration)
    return TestResult(tp, corrected, correction, calibration, df, rho_used, pval, report, rho,
                      alpha, z, hd, True, tuple(warns))


# keep pytest from collecting the public test_* functions when imported into test modules
for _fn in (test_no_factor, test_k_factor, test_given_sigma):
    _fn.__test__ = False
