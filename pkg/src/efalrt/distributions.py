"""
Chi-square and standard normal tail probabilities.

The chi-square survival function is the regularized upper incomplete gamma
function Q(df/2, x/2). Below x/2 = df/2 + 1 it is summed as a power series
for the lower function P; above, Q comes straight from a Lentz continued
fraction. The common prefactor x^a e^{-x} / Gamma(a + 1) is evaluated in the
form exp(-a * (t - log1p(t))) / (sqrt(2 pi a) e^{stirlerr(a)}), t = x/a - 1,
which keeps full relative accuracy for df up to ~1e6.
"""

import math
from dataclasses import dataclass

from .errors import InvalidInputError

_EPS = 2.2e-16
_TINY = 1e-300
_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class ChiSquareRef:
    """Reference chi-square distribution with `df` degrees of freedom."""

    df: float

    def __post_init__(self):
        if not self.df > 0:
            raise InvalidInputError(f"degrees of freedom must be positive, got {self.df}")

    def sf(self, x: float) -> float:
        return chisq_sf(self.df, x)

    def upper_quantile(self, alpha: float) -> float:
        return chisq_upper_quantile(self.df, alpha)


def _stirlerr(a: float) -> float:
    """log Gamma(a + 1) - (a log a - a + log(2 pi a) / 2)."""
    if a > 15.0:
        a2 = a * a
        return (1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - 1.0 / (1680 * a2)) / a2) / a2) / a
    return math.lgamma(a + 1.0) - (a * math.log(a) - a + 0.5 * math.log(2 * math.pi * a))


def _log_prefactor(a: float, x: float) -> float:
    """log(x^a e^{-x} / Gamma(a + 1)) for a > 0, x > 0."""
    if a < 10.0 or x < 0.5 * a:
        return a * math.log(x) - x - math.lgamma(a + 1.0)
    t = (x - a) / a
    # a*log(x) - x - (a*log(a) - a) = -a * (t - log1p(t))
    return -a * (t - math.log1p(t)) - 0.5 * math.log(2 * math.pi * a) - _stirlerr(a)


def _lower_series(a: float, x: float) -> float:
    """P(a, x) by the power series; intended for x < a + 1."""
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _upper_cfrac(a: float, x: float) -> float:
    """Q(a, x) by the modified Lentz continued fraction; intended for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    # x^a e^{-x} / Gamma(a) = a * prefactor
    return a * h * math.exp(_log_prefactor(a, x))


def _check_df(df: float) -> None:
    if not (df > 0 and math.isfinite(df)):
        raise InvalidInputError(f"degrees of freedom must be positive and finite, got {df}")


def chisq_sf(df: float, x: float) -> float:
    """P(chi2_df > x)."""
    _check_df(df)
    if not x >= 0:
        raise InvalidInputError(f"x must be non-negative, got {x}")
    a, y = 0.5 * df, 0.5 * x
    if y == 0:  # also catches x/2 underflowing
        return 1.0
    if math.isinf(x):
        return 0.0
    if y < a + 1.0:
        q = 1.0 - _lower_series(a, y)
    else:
        q = _upper_cfrac(a, y)
    return min(1.0, max(0.0, q))


def chisq_cdf(df: float, x: float) -> float:
    """P(chi2_df <= x)."""
    _check_df(df)
    if not x >= 0:
        raise InvalidInputError(f"x must be non-negative, got {x}")
    a, y = 0.5 * df, 0.5 * x
    if y == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if y < a + 1.0:
        p = _lower_series(a, y)
    else:
        p = 1.0 - _upper_cfrac(a, y)
    return min(1.0, max(0.0, p))


def chisq_pdf(df: float, x: float) -> float:
    _check_df(df)
    if x <= 0:
        if x == 0 and df == 2:
            return 0.5
        return 0.0 if (x < 0 or df > 2) else math.inf
    a, y = 0.5 * df, 0.5 * x
    # density of y = x/2 is y^(a-1) e^-y / Gamma(a) = a * prefactor / y
    return 0.5 * a / y * math.exp(_log_prefactor(a, y))


def chisq_upper_quantile(df: float, alpha: float) -> float:
    """
    Upper alpha-quantile x with P(chi2_df > x) = alpha.

    Safeguarded Newton iteration inside a bracket that shrinks on every
    evaluation; falls back to bisection whenever Newton leaves the bracket.
    """
    _check_df(df)
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")

    lo, hi = 0.0, df + 10.0 * math.sqrt(2.0 * df) + 10.0
    while chisq_sf(df, hi) > alpha:
        lo, hi = hi, 2.0 * hi

    x = min(max(df, lo), hi)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(500):
        g = chisq_sf(df, x) - alpha
        if g == 0:
            return x
        # sf is decreasing: g > 0 means the root lies to the right
        if g > 0:
            lo = x
        else:
            hi = x
        if abs(g) < 1e-15 or hi - lo <= 4 * _EPS * max(hi, _TINY):
            break
        dens = chisq_pdf(df, x)
        step_ok = False
        if dens > 0 and math.isfinite(dens):
            x_new = x + g / dens
            step_ok = lo < x_new < hi
        if not step_ok:
            # bisect; in log space when the bracket spans many orders of magnitude
            if lo > 0 and hi / lo > 1e3:
                x_new = math.sqrt(lo * hi)
            else:
                x_new = 0.5 * (lo + hi)
        x = x_new
    return x


def std_normal_sf(z: float) -> float:
    """P(Z > z) for a standard normal Z."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def std_normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))
