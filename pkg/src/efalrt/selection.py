"""Forward sequential choice of the number of factors."""

from dataclasses import dataclass

from .core_stats import as_data_matrix
from .errors import InvalidInputError
from .factor_mle import SolverOptions, factor_dof
from .lrt import TestResult, test_k_factor, test_no_factor


@dataclass(frozen=True)
class TrailEntry:
    k: int
    result: TestResult
    rejected: bool


@dataclass(frozen=True)
class SelectionResult:
    k_hat: int
    trail: tuple[TrailEntry, ...]
    stopped_reason: str  # "non-rejection", "df-exhausted" or "mle-failure"
    alpha: float

    @property
    def exhausted(self) -> bool:
        return self.stopped_reason == "df-exhausted"


def default_k_max(p: int) -> int:
    """Largest k whose test still has at least one degree of freedom."""
    k = 0
    while factor_dof(p, k + 1) >= 1:
        k += 1
    return k


def select_num_factors(
    data,
    alpha: float = 0.05,
    correction: str = "none",
    k_max: int | None = None,
    solver: SolverOptions | None = None,
) -> SelectionResult:
    """
    Test k = 0, 1, 2, ... at level `alpha` and stop at the first non-rejection.

    If every test up to `k_max` rejects, the result has
    ``stopped_reason="df-exhausted"`` and ``k_hat=k_max``. A k-factor fit that
    does not converge ends the search with ``stopped_reason="mle-failure"``
    and ``k_hat`` equal to that k; its entry is kept in the trail.
    """
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    x = as_data_matrix(data)
    p = x.shape[1]
    if p < 2:
        raise InvalidInputError("factor selection needs at least 2 variables")
    limit = default_k_max(p)
    k_max = limit if k_max is None else min(k_max, limit)
    if k_max < 0:
        raise InvalidInputError(f"k_max must be non-negative, got {k_max}")

    trail = []
    for k in range(k_max + 1):
        if k == 0:
            res = test_no_factor(x, correction=correction, alpha=alpha)
        else:
            res = test_k_factor(x, k, correction=correction, alpha=alpha, solver=solver)
        if not res.converged:
            trail.append(TrailEntry(k, res, res.rejected))
            return SelectionResult(k, tuple(trail), "mle-failure", alpha)
        trail.append(TrailEntry(k, res, res.rejected))
        if not res.rejected:
            return SelectionResult(k, tuple(trail), "non-rejection", alpha)
    return SelectionResult(k_max, tuple(trail), "df-exhausted", alpha)
