"""Finite-domain Gaussian prior and exact noise-free conditioning.

A :class:`ProblemInstance` holds the prior ``F ~ N(mu, Sigma)`` over ``N``
arms.  ``Sigma`` is either a dense ``(N, N)`` matrix or a length-``N`` vector
holding the diagonal of an independent prior; the latter keeps i.i.d. and
spike instances with large ``N`` out of quadratic memory.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, InconsistentObservationError, NumericalError
from .gauss_math import SYMMETRY_RTOL, check_psd

#: relative variance floor below which an arm counts as deterministic.
#: Conditioning on pivots much smaller than this lets rounding error in the
#: posterior mean of correlated arms grow without bound on smooth kernels.
VAR_FLOOR_RTOL = 1e-6
#: absolute part of the re-observation consistency tolerance
OBS_ATOL = 1e-6
#: C is re-symmetrised every this many rank-1 updates
RESYMMETRIZE_EVERY = 64
#: escalating diagonal jitter, relative to the mean prior variance
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
# pivoted Cholesky stops once the largest remaining pivot is below this (relative)
_PSTRF_RTOL = 1e-13
_RESIDUAL_RTOL = 1e-8


@dataclass
class ProblemInstance:
    """A bandit problem ``(N, T, mu, Sigma)``.

    ``covariance`` may be 1-D, meaning a diagonal prior.  Pass
    ``trusted=True`` from builders whose output is PSD by construction to
    skip the ``O(N^3)`` eigenvalue check.
    """

    n_arms: int
    horizon: int
    mean: np.ndarray
    covariance: np.ndarray
    trusted: bool = field(default=False, repr=False, compare=False)
    _factor: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.n_arms = int(self.n_arms)
        self.horizon = int(self.horizon)
        if self.n_arms < 1:
            raise DomainError(f"n_arms must be positive, got {self.n_arms}")
        if self.horizon < 1:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.horizon > self.n_arms:
            raise DomainError(f"horizon must not exceed n_arms, got N={self.n_arms}, T={self.horizon}")
        self.mean = np.ascontiguousarray(self.mean, dtype=float)
        self.covariance = np.ascontiguousarray(self.covariance, dtype=float)
        n = self.n_arms
        if self.mean.shape != (n,):
            raise DomainError(f"mean must have shape ({n},), got {self.mean.shape}")
        if not np.all(np.isfinite(self.mean)):
            raise DomainError("mean contains non-finite entries")
        cov = self.covariance
        if cov.ndim == 1:
            if cov.shape != (n,):
                raise DomainError(f"diagonal covariance must have shape ({n},), got {cov.shape}")
            if not np.all(np.isfinite(cov)) or np.any(cov < 0.0):
                raise DomainError("diagonal covariance must be finite and non-negative")
        elif cov.shape == (n, n):
            if self.trusted:
                if not np.all(np.isfinite(cov)):
                    raise DomainError("covariance contains non-finite entries")
                scale = float(np.max(np.abs(cov)))
                if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
                    raise DomainError("covariance is not symmetric")
            else:
                check_psd(cov)
        else:
            raise DomainError(f"covariance must have shape ({n},) or ({n}, {n}), got {cov.shape}")

    @property
    def is_diagonal(self):
        return self.covariance.ndim == 1

    @property
    def variances(self):
        return self.covariance if self.is_diagonal else np.diag(self.covariance)

    @property
    def var_floor(self):
        """Variance below which an arm is treated as already determined."""
        return VAR_FLOOR_RTOL * float(np.sum(self.variances)) / self.n_arms

    @property
    def obs_tol(self):
        return observation_tolerance(self.var_floor)

    def dense_covariance(self):
        return np.diag(self.covariance) if self.is_diagonal else self.covariance

    def factor(self):
        """Cached :class:`PriorFactor` of the covariance."""
        if self._factor is None:
            self._factor = factorize(self.covariance)
        return self._factor


def observation_tolerance(var_floor):
    """Largest ``|y - M[a]|`` accepted when observing an arm whose variance is below the floor."""
    return OBS_ATOL + 10.0 * math.sqrt(max(var_floor, 0.0))


@dataclass(frozen=True)
class SampledFunction:
    values: np.ndarray
    f_max: float
    f_min: float
    f_spread: float

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float)
        hi, lo = float(values.max()), float(values.min())
        return cls(values, hi, lo, hi - lo)


@dataclass(frozen=True)
class PriorFactor:
    """``cov[perm][:, perm] ~= L @ L.T`` (dense) or ``sqrt(diag)`` (diagonal)."""

    perm: np.ndarray
    lower: np.ndarray
    jitter: float = 0.0

    @property
    def rank(self):
        return self.lower.shape[1] if self.lower.ndim == 2 else self.lower.shape[0]

    def sample(self, mean, rng):
        """Draw ``mean + L z``; ``rng`` is a numpy Generator."""
        if self.lower.ndim == 1:
            return mean + self.lower * rng.standard_normal(self.lower.shape[0])
        out = mean.copy()
        out[self.perm] += self.lower @ rng.standard_normal(self.lower.shape[1])
        return out


def _pstrf(cov, tol):
    c, piv, rank, info = lapack.dpstrf(cov, tol=tol, lower=1)
    if info < 0:
        raise NumericalError(f"dpstrf rejected argument {-info}")
    perm = piv[: cov.shape[0]] - 1
    lower = np.tril(c)[:, :rank]
    return perm, np.ascontiguousarray(lower)


def factorize(cov):
    """Pivoted Cholesky factor of a PSD matrix with escalating diagonal jitter.

    The factor is truncated at the numerical rank, so draws stay in the
    column space of ``cov`` and remain consistent with exact conditioning.
    Each attempt is accepted when the Schur-complement residual diagonal
    lies within ``1e-8`` of the mean variance; since the residual is PSD
    this bounds every residual entry.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        return PriorFactor(np.arange(cov.shape[0]), np.sqrt(np.maximum(cov, 0.0)))
    n = cov.shape[0]
    mean_diag = float(np.trace(cov)) / n
    if mean_diag <= 0.0:
        if np.any(cov != 0.0):
            raise NumericalError("covariance has non-positive trace but non-zero entries")
        return PriorFactor(np.arange(n), np.zeros((n, 0)))
    worst = None
    for rel in JITTER_LADDER:
        jitter = rel * mean_diag
        work = cov + jitter * np.eye(n) if jitter else cov.copy()
        perm, lower = _pstrf(work, _PSTRF_RTOL * mean_diag)
        resid = np.diag(work)[perm] - np.einsum("ij,ij->i", lower, lower)
        worst = float(np.max(np.abs(resid)))
        if worst <= _RESIDUAL_RTOL * mean_diag:
            return PriorFactor(perm, lower, jitter)
    raise NumericalError(
        f"pivoted Cholesky failed after jitter {JITTER_LADDER[-1]:g} x mean variance "
        f"(N={n}, mean variance={mean_diag:.3g}, worst residual={worst:.3g})"
    )


def sample_function(instance, rng_seed):
    """Draw one realisation ``F ~ N(mu, Sigma)``; deterministic in ``rng_seed``."""
    rng = np.random.default_rng(rng_seed)
    return SampledFunction.from_values(instance.factor().sample(instance.mean, rng))


# ---------------------------------------------------------------------------
# full-covariance posterior


@dataclass
class PosteriorState:
    """Posterior ``(M_t, C_t)`` after noise-free observations.

    ``observed`` maps arm index to its observed value, in observation order.
    Conditioning returns a new state; nothing is mutated in place.
    """

    mean: np.ndarray
    cov: np.ndarray
    observed: dict
    var_floor: float
    prior_mean: np.ndarray = field(repr=False)
    n_updates: int = 0

    @classmethod
    def from_instance(cls, instance):
        return cls(
            mean=instance.mean.copy(),
            cov=np.array(instance.dense_covariance(), dtype=float),
            observed={},
            var_floor=instance.var_floor,
            prior_mean=instance.mean.copy(),
        )

    @property
    def n_arms(self):
        return self.mean.shape[0]

    @property
    def variances(self):
        return np.diag(self.cov)


def posterior_sd(state, arm):
    return math.sqrt(max(float(state.cov[arm, arm]), 0.0))


def condition(state, arm, observed_value):
    """Condition ``state`` on ``F[arm] == observed_value``.

    Applies the rank-1 update ``M' = M + C[:, a] (y - M[a]) / C[a, a]`` and
    ``C' = C - C[:, a] C[a, :] / C[a, a]``.  If ``C[a, a]`` is at or below the
    variance floor the arm is already determined; the state is returned
    unchanged when the value agrees with ``M[a]``.

    Raises
    ------
    InconsistentObservationError
        A determined arm was observed at a contradicting value.
    """
    arm = int(arm)
    if not 0 <= arm < state.n_arms:
        raise DomainError(f"arm {arm} outside [0, {state.n_arms})")
    y = float(observed_value)
    if not math.isfinite(y):
        raise DomainError("observed value must be finite")
    c_aa = float(state.cov[arm, arm])
    if c_aa <= state.var_floor:
        tol = observation_tolerance(state.var_floor)
        if abs(y - state.mean[arm]) > tol:
            raise InconsistentObservationError(
                f"arm {arm} has posterior variance {c_aa:.3g} and mean {state.mean[arm]!r} "
                f"but was observed at {y!r}"
            )
        return state
    col = state.cov[:, arm].copy()
    mean = state.mean + col * ((y - state.mean[arm]) / c_aa)
    cov = state.cov - np.outer(col, col / c_aa)
    observed = dict(state.observed)
    observed[arm] = y
    n_updates = state.n_updates + 1
    if n_updates % RESYMMETRIZE_EVERY == 0:
        cov = 0.5 * (cov + cov.T)
    idx = np.fromiter(observed.keys(), dtype=np.intp, count=len(observed))
    mean[idx] = np.fromiter(observed.values(), dtype=float, count=len(observed))
    cov[idx, :] = 0.0
    cov[:, idx] = 0.0
    return PosteriorState(mean, cov, observed, state.var_floor, state.prior_mean, n_updates)
