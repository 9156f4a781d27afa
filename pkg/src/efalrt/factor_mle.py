"""
Maximum likelihood fit of the k-factor model Sigma = L L' + Psi.

For fixed Psi the optimal loadings come from the eigenpairs of
Psi^{-1/2} S Psi^{-1/2}; what remains is a smooth function of the
uniquenesses alone. That profile discrepancy is minimized over
log-uniquenesses with L-BFGS-B, where the lower bound implements the
Heywood floor. The fit runs on the correlation scale and is mapped back,
which makes the result exactly scale equivariant.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core_stats import cov_to_corr, logdet_spd, trace_prod_inv
from .errors import InvalidInputError, ModelSaturatedError
from .sampler import FactorModel

UNIQUENESS_FLOOR = 0.005
INITIAL_UNIQUENESS = 0.5
_POLISH_ROUNDS = 3


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 500
    # a fit counts as converged when the projected gradient (infinity norm,
    # log-uniqueness scale) is at most gtol_per_var * p
    gtol_per_var: float = 1e-8
    ftol: float = 1e-12
    floor: float = UNIQUENESS_FLOOR
    initial: float = INITIAL_UNIQUENESS


@dataclass(frozen=True, eq=False)
class MleFit:
    model: FactorModel
    k: int
    converged: bool
    iterations: int
    final_gradient_norm: float
    # profile -2 log-likelihood per observation, shifted so the saturated
    # model scores 0: log|Sigma_k| - log|S| + tr(S Sigma_k^{-1}) - p
    discrepancy: float
    heywood: bool = False
    objective_trace: tuple = field(default=(), repr=False)
    message: str = ""

    @property
    def neg2loglik_profile(self) -> float:
        return self.discrepancy

    @property
    def sigma(self) -> np.ndarray:
        return self.model.implied_sigma()


def factor_dof(p: int, k: int) -> float:
    """Degrees of freedom ((p - k)^2 - p - k) / 2 of the k-factor test."""
    return ((p - k) ** 2 - p - k) / 2


def discrepancy(s: np.ndarray, sigma: np.ndarray) -> float:
    """log|sigma| - log|s| + tr(s sigma^{-1}) - p, computed through Cholesky."""
    p = s.shape[0]
    return logdet_spd(sigma) - logdet_spd(s) + trace_prod_inv(s, sigma) - p


def _eig_desc(r: np.ndarray, psi: np.ndarray):
    scale = 1.0 / np.sqrt(psi)
    theta, vecs = np.linalg.eigh(r * scale[:, None] * scale[None, :])
    return theta[::-1], vecs[:, ::-1]


def _residual_mask(theta: np.ndarray, k: int) -> np.ndarray:
    # eigen-directions not absorbed by a loading column
    mask = np.ones(theta.shape[0], dtype=bool)
    mask[:k] = theta[:k] < 1.0
    return mask


def profile_objective(log_psi: np.ndarray, r: np.ndarray, k: int):
    """Profile discrepancy and its gradient with respect to log-uniquenesses."""
    theta, vecs = _eig_desc(r, np.exp(log_psi))
    theta = np.maximum(theta, 1e-300)
    mask = _residual_mask(theta, k)
    t = theta[mask]
    value = float(np.sum(t - np.log(t) - 1.0))
    grad = (vecs[:, mask] ** 2) @ (1.0 - t)
    return value, grad


def _loadings(r: np.ndarray, psi: np.ndarray, k: int) -> np.ndarray:
    theta, vecs = _eig_desc(r, psi)
    strength = np.sqrt(np.maximum(theta[:k] - 1.0, 0.0))
    lam = np.sqrt(psi)[:, None] * vecs[:, :k] * strength[None, :]
    for j in range(k):
        nz = np.flatnonzero(np.abs(lam[:, j]) > 1e-14)
        if nz.size and lam[nz[0], j] < 0:
            lam[:, j] = -lam[:, j]
    return lam


def _projected_grad_norm(x, grad, lower) -> float:
    g = grad.copy()
    at_floor = x <= lower + 1e-12
    g[at_floor & (g > 0)] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def fit_factor_model(s: np.ndarray, k: int, opts: SolverOptions | None = None) -> MleFit:
    """
    Fit a k-factor model to the sample covariance `s` by maximum likelihood.

    Parameters
    ----------
    s : ndarray (p, p)
        Positive definite sample covariance.
    k : int
        Number of factors, with ((p - k)^2 - p - k) / 2 >= 0.
    opts : SolverOptions, optional

    Returns
    -------
    MleFit
        Loadings in canonical orientation (L' Psi^{-1} L diagonal and
        decreasing, first nonzero entry of each column positive). A fit that
        hits the iteration limit comes back with ``converged=False`` and the
        best iterate found.
    """
    opts = opts or SolverOptions()
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInputError(f"expected a square covariance matrix, got shape {s.shape}")
    p = s.shape[0]
    if k < 0:
        raise InvalidInputError(f"k must be non-negative, got {k}")
    if factor_dof(p, k) < 0:
        raise ModelSaturatedError(
            f"k={k} factors over-parameterize p={p} variables (dof {factor_dof(p, k):g})"
        )
    logdet_spd(s)  # raises if s is not positive definite
    d = np.diag(s).copy()
    r = cov_to_corr(s)

    if k == 0:
        model = FactorModel(np.zeros((p, 0)), d)
        f = -logdet_spd(r)
        return MleFit(model, 0, True, 0, 0.0, f, objective_trace=(f,))

    lower = np.log(opts.floor)
    x0 = np.full(p, np.log(opts.initial))
    gtol = opts.gtol_per_var * p
    trace = [profile_objective(x0, r, k)[0]]

    def record(xk):
        trace.append(profile_objective(xk, r, k)[0])

    def run(start, ftol, iters):
        return minimize(
            profile_objective,
            start,
            args=(r, k),
            jac=True,
            method="L-BFGS-B",
            bounds=[(lower, None)] * p,
            callback=record,
            options={"maxiter": iters, "gtol": gtol, "ftol": ftol, "maxcor": 20},
        )

    res = run(x0, opts.ftol, opts.max_iter)
    nit = int(res.nit)
    x = np.maximum(res.x, lower)
    value, grad = profile_objective(x, r, k)
    gnorm = _projected_grad_norm(x, grad, lower)
    message = str(res.message)
    # a stop on relative objective change can leave the gradient slightly
    # above tolerance; warm restarts usually finish the job in 1-2 steps
    for _ in range(_POLISH_ROUNDS):
        if gnorm <= gtol or nit >= opts.max_iter:
            break
        res = run(x, 0.0, opts.max_iter - nit)
        nit += int(res.nit)
        x_new = np.maximum(res.x, lower)
        value_new, grad_new = profile_objective(x_new, r, k)
        if value_new > value:
            break
        x, value, grad = x_new, value_new, grad_new
        gnorm = _projected_grad_norm(x, grad, lower)
        message = f"{message}; restart: {res.message}"
    converged = gnorm <= gtol
    psi_r = np.exp(x)
    lam_r = _loadings(r, psi_r, k)
    scale = np.sqrt(d)
    model = FactorModel(lam_r * scale[:, None], psi_r * d)
    heywood = bool(np.any(x <= lower + 1e-8))
    return MleFit(
        model,
        k,
        converged,
        nit,
        gnorm,
        value,
        heywood=heywood,
        objective_trace=tuple(trace),
        message=message,
    )
