"""Scalar Gaussian special functions and expected-improvement bounds.

Every function here is pure.  Scalar entry points validate their input and
raise :class:`~gpfewshot.errors.DomainError`; the ``*_array`` variants skip
validation and are meant for vectorised acquisition scoring.
"""

import math

import numpy as np
from scipy.special import erfc, erfcx

from .errors import DomainError

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
INV_SQRT2 = 1.0 / math.sqrt(2.0)
SQRT_HALF_PI = math.sqrt(0.5 * math.pi)

# relative eigenvalue slack accepted by check_psd
PSD_RTOL = 1e-8
SYMMETRY_RTOL = 1e-10


def _finite(x, name="x"):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_pdf(x):
    """Standard normal density ``exp(-x**2/2) / sqrt(2 pi)``."""
    x = _finite(x)
    return math.exp(-0.5 * x * x) * INV_SQRT_2PI


def std_normal_ccdf(tau):
    """Upper tail probability P(Z > tau) of a standard normal.

    Evaluated through ``erfc`` so that the far tail keeps full relative
    precision instead of cancelling in ``1 - cdf``.  Values past
    ``tau ~ 37.5`` underflow to 0.
    """
    tau = _finite(tau, "tau")
    return 0.5 * float(erfc(tau * INV_SQRT2))


def ccdf_sandwich(tau):
    """Lower and upper bounds on the normal tail, valid for ``tau > 0``.

    Returns
    -------
    (lower, upper) : tuple of float
        ``(1/tau - 1/tau**3) * pdf(tau)`` and
        ``(1/tau - 1/tau**3 + 3/tau**5) * pdf(tau)``.
    """
    tau = _finite(tau, "tau")
    if tau <= 0.0:
        raise DomainError(f"ccdf_sandwich requires tau > 0, got {tau}")
    n = std_normal_pdf(tau)
    t1 = 1.0 / tau
    t3 = t1 ** 3
    return (t1 - t3) * n, (t1 - t3 + 3.0 * t1 ** 5) * n


def _ei_nonneg(a):
    # ei(a) = pdf(a) * (1 - a * Mills(a)) with Mills(a) = sqrt(pi/2) * erfcx(a/sqrt2)
    return math.exp(-0.5 * a * a) * INV_SQRT_2PI * (1.0 - a * SQRT_HALF_PI * float(erfcx(a * INV_SQRT2)))


def ei(tau):
    """Standard expected improvement ``E[max(Z - tau, 0)]`` for ``Z ~ N(0, 1)``.

    Equal to ``pdf(tau) - tau * ccdf(tau)``.  Negative arguments go through
    the reflection ``ei(-s) = ei(s) + s`` so no branch ever subtracts two
    large numbers.
    """
    tau = _finite(tau, "tau")
    a = abs(tau)
    base = max(_ei_nonneg(a), 0.0)
    return base + a if tau < 0.0 else base


def ei_scaled(tau, mu, sigma):
    """Expected improvement of ``N(mu, sigma**2)`` over threshold ``tau``.

    ``sigma = 0`` returns the deterministic limit ``max(mu - tau, 0)``, which
    is what an arm observed without noise contributes.
    """
    tau = _finite(tau, "tau")
    mu = _finite(mu, "mu")
    sigma = _finite(sigma, "sigma")
    if sigma < 0.0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return max(mu - tau, 0.0)
    return sigma * ei((tau - mu) / sigma)


def ei_sandwich(tau):
    """Bounds ``((1/tau**2 - 3/tau**4) pdf(tau), pdf(tau)/tau**2)`` on ``ei(tau)``, ``tau > 0``."""
    tau = _finite(tau, "tau")
    if tau <= 0.0:
        raise DomainError(f"ei_sandwich requires tau > 0, got {tau}")
    n = std_normal_pdf(tau)
    t2 = 1.0 / (tau * tau)
    return (t2 - 3.0 * t2 * t2) * n, t2 * n


def ei_second_derivative(tau):
    """Second derivative of ``ei``; it equals the normal density, hence ``ei`` is convex."""
    tau = _finite(tau, "tau")
    return math.exp(-0.5 * tau * tau) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# vectorised kernels used by the acquisition policies


def ei_array(z):
    """Vectorised :func:`ei`; no input validation."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    base = np.exp(-0.5 * a * a) * INV_SQRT_2PI * (1.0 - a * SQRT_HALF_PI * erfcx(a * INV_SQRT2))
    np.maximum(base, 0.0, out=base)
    return np.where(z < 0.0, base + a, base)


def ei_scaled_array(tau, mu, sd):
    """Vectorised :func:`ei_scaled` for a scalar threshold and per-arm ``mu``, ``sd``."""
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    out = np.maximum(mu - tau, 0.0)
    pos = sd > 0.0
    if pos.any():
        s = sd[pos]
        out[pos] = s * ei_array((tau - mu[pos]) / s)
    return out


# ---------------------------------------------------------------------------
# multivariate expected improvement


def check_psd(c, name="covariance"):
    """Validate a symmetric positive semi-definite matrix and return it as float array.

    Symmetry must hold to ``1e-10`` relative to the largest entry and the
    smallest eigenvalue must be at least ``-1e-8 * trace / N``.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DomainError(f"{name} contains non-finite entries")
    n = c.shape[0]
    scale = float(np.max(np.abs(c))) if n else 0.0
    if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise DomainError(f"{name} is not symmetric")
    slack = PSD_RTOL * max(float(np.trace(c)), 0.0) / max(n, 1)
    if np.min(np.diag(c), initial=0.0) < -slack:
        raise DomainError(f"{name} has a negative diagonal entry")
    if n and float(np.linalg.eigvalsh(0.5 * (c + c.T))[0]) < -slack:
        raise DomainError(f"{name} is not positive semi-definite")
    return c


def mei_upper_bound(m, c, tau):
    """Closed-form upper bound on ``E[max(max_n F_n - tau, 0)]`` for ``F ~ N(m, c)``.

    The bound is::

        max(max_n(m_n - tau + sqrt(2 c_nn log N)), 0)
            + max_n sqrt(c_nn) / (2 sqrt(2 pi) log N)

    Parameters
    ----------
    m : array_like, shape (N,)
    c : array_like, shape (N, N)
        Positive semi-definite covariance.
    tau : float
        Threshold.

    Raises
    ------
    DomainError
        If ``N < 2`` (``log N`` would vanish) or ``c`` is not PSD.
    """
    m = np.asarray(m, dtype=float).ravel()
    tau = _finite(tau, "tau")
    n = m.shape[0]
    if n < 2:
        raise DomainError(f"mei_upper_bound requires N >= 2, got N = {n}")
    c = check_psd(c)
    if c.shape[0] != n:
        raise DomainError(f"mean has length {n} but covariance is {c.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("mean contains non-finite entries")
    log_n = math.log(n)
    sd = np.sqrt(np.maximum(np.diag(c), 0.0))
    head = max(float(np.max(m - tau + sd * math.sqrt(2.0 * log_n))), 0.0)
    return head + float(np.max(sd)) / (2.0 * math.sqrt(2.0 * math.pi) * log_n)


def psd_factor(c):
    """Return ``L`` with ``L @ L.T == c`` from a clipped eigendecomposition."""
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    return v * np.sqrt(np.maximum(w, 0.0))


def mei_monte_carlo(m, c, tau, n_samples, rng):
    """Monte Carlo estimate of the multivariate expected improvement.

    Returns
    -------
    (mean, stderr) : tuple of float
    """
    m = np.asarray(m, dtype=float).ravel()
    factor = psd_factor(check_psd(c))
    z = rng.standard_normal((int(n_samples), m.shape[0]))
    draws = m + z @ factor.T
    gain = np.maximum(draws.max(axis=1) - float(tau), 0.0)
    return float(gain.mean()), float(gain.std(ddof=1) / math.sqrt(len(gain)))
