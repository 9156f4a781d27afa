"""
Deterministic matrix statistics on an N x p observation matrix.

Every determinant and inverse-trace goes through a Cholesky factorization;
raw determinants overflow or underflow once p reaches the hundreds.
"""

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf

from .errors import DegenerateColumnError, InvalidInputError, NotPositiveDefiniteError

# A Cholesky pivot at or below this fraction of the largest diagonal entry
# counts as a failure.
PIVOT_RTOL = 1e-12


def as_data_matrix(data) -> np.ndarray:
    """Validate observations (rows) by variables (columns) and return a float array."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidInputError(f"data must be 2-dimensional, got shape {x.shape}")
    if x.shape[0] < 2:
        raise InvalidInputError(f"need at least 2 observations, got {x.shape[0]}")
    if x.shape[1] < 1:
        raise InvalidInputError("need at least 1 variable")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contain non-finite entries")
    return x


def sample_covariance(data) -> np.ndarray:
    """Unbiased (divisor N - 1) sample covariance of the rows of `data`."""
    x = as_data_matrix(data)
    centered = x - x.mean(axis=0)
    s = centered.T @ centered / (x.shape[0] - 1)
    return (s + s.T) / 2


def cov_to_corr(s: np.ndarray) -> np.ndarray:
    d = np.diag(s)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise DegenerateColumnError(int(bad[0]))
    scale = 1.0 / np.sqrt(d)
    r = s * scale[:, None] * scale[None, :]
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def sample_correlation(data) -> np.ndarray:
    """Sample correlation matrix; raises DegenerateColumnError on a constant column."""
    return cov_to_corr(sample_covariance(data))


def cholesky_lower(m: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotPositiveDefiniteError carrying the index of the first failing
    pivot, including pivots that are positive but below
    ``PIVOT_RTOL * max(diag(m))``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    c, info = dpotrf(m, lower=1, clean=1)
    if info < 0:
        raise InvalidInputError(f"invalid argument to Cholesky factorization ({info})")
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    pivots = np.diag(c) ** 2
    small = np.flatnonzero(pivots <= PIVOT_RTOL * np.max(np.diag(m)))
    if small.size:
        raise NotPositiveDefiniteError(int(small[0]))
    return c


def logdet_spd(m: np.ndarray) -> float:
    """log|m| as twice the sum of log Cholesky pivots."""
    c = cholesky_lower(m)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def trace_prod_inv(a: np.ndarray, b: np.ndarray) -> float:
    """tr(a b^{-1}) via Cholesky solves with b; no explicit inverse."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    c = cholesky_lower(b)
    # tr(a b^{-1}) = tr(b^{-1} a)
    y = cho_solve((c, True), a)
    return float(np.trace(y))
