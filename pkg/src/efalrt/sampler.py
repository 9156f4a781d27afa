"""
Reproducible synthetic data for the simulation experiments.

Randomness comes from a Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=stream)``, so replication r of an experiment
draws the same numbers no matter which worker runs it or in what order.
Normal variates use numpy's ziggurat sampler (``Generator.standard_normal``).
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core_stats import cholesky_lower
from .errors import InvalidInputError

# Table 1 discretization: cut points on z ~ N(0, 1) and the value assigned to
# each interval [cut_{j-1}, cut_j).
DISCRETIZATIONS = {
    "I": ((0.0,), (-1.0, 1.0)),
    "II": ((-1.0, 0.0, 1.0), (-2.0, -1.0, 1.0, 2.0)),
    "III": ((-1.0, -0.4, 0.0, 0.4, 1.0), (-3.0, -2.0, -1.0, 1.0, 2.0, 3.0)),
}

GENERATOR_KINDS = ("factor-normal", "iid-normal", "iid-t", "discretized")


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Sigma = loadings @ loadings.T + diag(uniquenesses), with mean `mean`."""

    loadings: np.ndarray
    uniquenesses: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        psi = np.asarray(self.uniquenesses, dtype=float).ravel()
        if lam.shape[0] != psi.shape[0]:
            if lam.size == 0:
                lam = np.zeros((psi.shape[0], 0))
            else:
                raise InvalidInputError(
                    f"loadings have {lam.shape[0]} rows but {psi.shape[0]} uniquenesses"
                )
        if np.any(psi <= 0):
            raise InvalidInputError("uniquenesses must be strictly positive")
        if lam.shape[1] >= psi.shape[0]:
            raise InvalidInputError(f"need k < p, got k={lam.shape[1]}, p={psi.shape[0]}")
        mu = np.zeros(psi.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float)
        if mu.shape != psi.shape:
            raise InvalidInputError("mean must have one entry per variable")
        object.__setattr__(self, "loadings", lam)
        object.__setattr__(self, "uniquenesses", psi)
        object.__setattr__(self, "mean", mu)

    @property
    def p(self) -> int:
        return self.uniquenesses.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def implied_sigma(self) -> np.ndarray:
        return self.loadings @ self.loadings.T + np.diag(self.uniquenesses)

    @cached_property
    def sigma_cholesky(self) -> np.ndarray:
        return cholesky_lower(self.implied_sigma())


def build_example_model(k0: int, p: int) -> FactorModel:
    """
    Loading structures used in the k-factor type I error experiments.

    k0=1: every variable loads 0.3 on one factor, uniqueness 0.91.
    k0=3: three diagonal blocks of heights p1, p1, p - 2*p1 (p1 = p // 3)
    loading 0.6, uniqueness 0.64. Both give unit-variance variables.
    """
    if k0 == 1:
        rho = 0.3
        lam = np.full((p, 1), rho)
    elif k0 == 3:
        if p < 4:
            raise InvalidInputError("k0=3 needs p >= 4 (a factor model has k < p)")
        rho = 0.6
        p1 = p // 3
        lam = np.zeros((p, 3))
        lam[:p1, 0] = rho
        lam[p1 : 2 * p1, 1] = rho
        lam[2 * p1 :, 2] = rho
    else:
        raise InvalidInputError(f"unsupported k0={k0}; expected 1 or 3")
    return FactorModel(lam, np.full(p, 1.0 - rho**2))


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """
    What to sample and from which random stream.

    kind          one of GENERATOR_KINDS
    model         FactorModel for kind="factor-normal"
    df            degrees of freedom d0 for kind="iid-t"
    setting       "I", "II" or "III" for kind="discretized"
    """

    kind: str
    model: FactorModel | None = None
    df: float | None = None
    setting: str | None = None
    seed: int = 0
    stream: int | Sequence[int] = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if self.kind == "factor-normal" and self.model is None:
            raise InvalidInputError("factor-normal generator needs a FactorModel")
        if self.kind == "iid-t" and not (self.df is not None and self.df > 0):
            raise InvalidInputError("iid-t generator needs positive df")
        if self.kind == "discretized" and self.setting not in DISCRETIZATIONS:
            raise InvalidInputError(f"unknown discretization setting {self.setting!r}")
        if self.model is not None:
            self.model.sigma_cholesky  # fail early if Sigma is not positive definite

    def with_stream(self, stream) -> "GeneratorSpec":
        return GeneratorSpec(self.kind, self.model, self.df, self.setting, self.seed, stream)

    @property
    def label(self) -> str:
        if self.kind == "iid-t":
            return f"iid-t{self.df:g}"
        if self.kind == "discretized":
            return f"discretized-{self.setting}"
        if self.kind == "factor-normal":
            return f"factor-normal-k{self.model.k}"
        return self.kind


def make_rng(seed: int, stream=0) -> np.random.Generator:
    if isinstance(stream, (int, np.integer)):
        stream = (int(stream),)
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def discretize(z: np.ndarray, setting: str) -> np.ndarray:
    cuts, values = DISCRETIZATIONS[setting]
    return np.asarray(values)[np.digitize(z, cuts)]


def sample(spec: GeneratorSpec, N: int, p: int) -> np.ndarray:
    """Draw an N x p data matrix as described by `spec`."""
    if N < 1 or p < 1:
        raise InvalidInputError(f"need N, p >= 1, got N={N}, p={p}")
    rng = make_rng(spec.seed, spec.stream)
    if spec.kind == "factor-normal":
        if spec.model.p != p:
            raise InvalidInputError(f"model has p={spec.model.p}, requested p={p}")
        z = rng.standard_normal((N, p))
        return spec.model.mean + z @ spec.model.sigma_cholesky.T
    if spec.kind == "iid-normal":
        return rng.standard_normal((N, p))
    if spec.kind == "iid-t":
        z = rng.standard_normal((N, p))
        v = rng.chisquare(spec.df, size=(N, p))
        return z / np.sqrt(v / spec.df)
    return discretize(rng.standard_normal((N, p)), spec.setting)
