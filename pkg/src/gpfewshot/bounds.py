"""Closed-form regret bounds.

All logarithms are natural.  Every evaluator is pure, checks its validity
range and raises :class:`~gpfewshot.errors.DomainError` instead of
returning NaN.  Horizons and arm counts may be passed as integral floats
(``1e20``); they are converted to exact Python integers.
"""

from dataclasses import dataclass, field
import math

from .errors import DomainError

#: exponent of the horizon in the finite-T correction factor
_CORRECTION_EXP = 1.0 / (2.0 * math.sqrt(math.pi))
#: the finite-domain bound is only stated from this horizon on
MIN_HORIZON = 500
#: largest horizon the integer bisection will consider
MAX_INT64 = 2**63 - 1

BOUND_KINDS = (
    "thm1_spread",
    "cor1_normreg",
    "lower_iid",
    "lower_prior_independent",
    "thm2_continuous",
    "grunewalder",
)


@dataclass(frozen=True)
class BoundReport:
    """A bound value together with the inputs it was evaluated at."""

    kind: str
    inputs: dict = field(default_factory=dict)
    value: float = math.nan

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise DomainError(f"unknown bound kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise DomainError(f"{self.kind} value is not finite")

    def to_dict(self):
        return {"kind": self.kind, "inputs": dict(self.inputs), "value": self.value}


def _count(x, name, minimum=1):
    """Exact integer from an int or an integral float."""
    if isinstance(x, bool):
        raise DomainError(f"{name} must be an integer, got {x!r}")
    if isinstance(x, int):
        n = x
    else:
        try:
            xf = float(x)
        except (TypeError, ValueError):
            raise DomainError(f"{name} must be an integer, got {x!r}") from None
        if not math.isfinite(xf) or xf != math.floor(xf):
            raise DomainError(f"{name} must be a finite integer, got {x!r}")
        n = int(xf)
    if n < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {n}")
    return n


def _positive(x, name):
    try:
        xf = float(x)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {x!r}") from None
    if not math.isfinite(xf) or xf <= 0.0:
        raise DomainError(f"{name} must be finite and > 0, got {x!r}")
    return xf


def _finite_regime(n, t):
    n = _count(n, "N")
    t = _count(t, "T")
    if not n >= t >= MIN_HORIZON:
        raise DomainError(f"requires N ≥ T ≥ {MIN_HORIZON}, got N={n}, T={t}")
    return n, t


def horizon_correction(t):
    """``(1 - T^(-1/(2 sqrt(pi)))) * sqrt(log T - log(3 log^(3/2) T))``."""
    log_t = math.log(t)
    inner = log_t - math.log(3.0 * log_t**1.5)
    if inner <= 0.0:
        raise DomainError(f"log(T / (3 log^1.5 T)) must be positive, got T={t}")
    return (1.0 - math.exp(-_CORRECTION_EXP * log_t)) * math.sqrt(inner)


def thm1_regret_bound(n_arms, horizon):
    """Upper bound on ``1 - E[spread found] / E[true spread]`` for EI2 and UCB2.

    ``1 - (1 - T^(-1/(2 sqrt pi))) sqrt((log T - log(3 log^(3/2) T)) / log N)``,
    valid for ``N >= T >= 500``.
    """
    n, t = _finite_regime(n_arms, horizon)
    return 1.0 - horizon_correction(t) / math.sqrt(math.log(n))


def cor1_normreg_bound(n_arms, horizon):
    """Bound on the normalised simple regret for zero-mean priors; same expression."""
    return thm1_regret_bound(n_arms, horizon)


def _asymptotic(n_arms, horizon):
    n = _count(n_arms, "N", 2)
    t = _count(horizon, "T", 2)
    if t > n:
        raise DomainError(f"requires N >= T, got N={n}, T={t}")
    return 1.0 - math.sqrt(math.log(t) / math.log(n))


def asymptotic_normreg(n_arms, horizon):
    """``1 - sqrt(log T / log N)``: the large-N envelope of the upper bound (epsilon = 0)."""
    return _asymptotic(n_arms, horizon)


def lower_bound_iid(n_arms, horizon):
    """Asymptotic normreg floor for i.i.d. standard normal arms (epsilon = 0)."""
    return _asymptotic(n_arms, horizon)


def lower_bound_prior_independent(n_arms, horizon):
    """Worst-case normreg ``1 - T/N`` for any policy that ignores the prior."""
    n = _count(n_arms, "N")
    t = _count(horizon, "T")
    if t > n:
        raise DomainError(f"requires T <= N, got N={n}, T={t}")
    return 1.0 - t / n


def required_T_upper(n_arms, target_normreg):
    """Envelope ``N^((1 - normreg)^2)`` for the horizon needed to reach ``target_normreg``."""
    n = _count(n_arms, "N", 2)
    r = float(target_normreg)
    if not 0.0 < r < 1.0:
        raise DomainError(f"target normreg must lie in (0, 1), got {target_normreg!r}")
    return math.exp((1.0 - r) ** 2 * math.log(n))


def required_T_bisection(n_arms, target_normreg):
    """Smallest integer ``T >= 500`` with ``thm1_regret_bound(N, T) <= target``.

    The search runs over ``[500, min(N, 2^63 - 1)]`` using that the bound is
    non-increasing in ``T``.  Raises :class:`DomainError` when even the
    largest admissible ``T`` does not reach the target.
    """
    n = _count(n_arms, "N", MIN_HORIZON)
    r = float(target_normreg)
    if not 0.0 < r < 1.0:
        raise DomainError(f"target normreg must lie in (0, 1), got {target_normreg!r}")
    lo, hi = MIN_HORIZON, min(n, MAX_INT64)
    if thm1_regret_bound(n, lo) <= r:
        return lo
    if thm1_regret_bound(n, hi) > r:
        raise DomainError(f"target {r} not reachable with T <= {hi} at N={n}")
    while hi - lo > 1:  # invariant: bound(lo) > r >= bound(hi)
        mid = (lo + hi) // 2
        if thm1_regret_bound(n, mid) <= r:
            hi = mid
        else:
            lo = mid
    return hi


def integer_root(t, d):
    """``floor(t ** (1/d))`` computed exactly for integers."""
    t = _count(t, "T")
    d = _count(d, "D")
    r = int(round(t ** (1.0 / d)))
    while r**d > t:
        r -= 1
    while (r + 1) ** d <= t:
        r += 1
    return r


def grunewalder_bound(dim, horizon, lipschitz):
    """Grid-policy regret bound ``sqrt(2 L_k / floor(T^(1/D))) (2 sqrt(log 2T) + 15 sqrt(D))``."""
    d = _count(dim, "D")
    t = _count(horizon, "T")
    lk = _positive(lipschitz, "L_k")
    side = integer_root(t, d)
    if side < 1:
        raise DomainError(f"floor(T^(1/D)) must be >= 1, got T={t}, D={d}")
    return math.sqrt(2.0 * lk / side) * (2.0 * math.sqrt(math.log(2 * t)) + 15.0 * math.sqrt(d))


def _check_lipschitz(lk):
    lk = _positive(lk, "L_k")
    if lk <= math.e:
        raise DomainError(f"requires L_k > e so that log(L_k) > 1, got L_k={lk}")
    return lk


def thm2_grid_sides(dim, horizon, lipschitz):
    """Segments per side ``ceil(L_k / log(L_k) * T^(1/D))`` of the pre-selection grid."""
    d = _count(dim, "D")
    t = _count(horizon, "T")
    lk = _check_lipschitz(lipschitz)
    return int(math.ceil(lk / math.log(lk) * math.exp(math.log(t) / d)))


def thm2_continuous_bound(dim, horizon, lipschitz, sigma_cap):
    """Regret bound of EI2/UCB2 on the unit cube ``[0, 1]^D``.

    The sum of a discretisation term and the finite-domain bound applied
    to the grid of :func:`thm2_grid_sides`.  Validity needs ``L_k > e``,
    ``T >= 500`` and a grid of ``N = S^D >= T`` points; ``N`` is compared
    in log space, so huge grids do not overflow.
    """
    d = _count(dim, "D")
    t = _count(horizon, "T")
    lk = _check_lipschitz(lipschitz)
    sigma = _positive(sigma_cap, "sigma")
    if t < MIN_HORIZON:
        raise DomainError(f"requires T >= {MIN_HORIZON} (finite-domain bound validity), got T={t}")
    s = thm2_grid_sides(d, t, lk)
    log_n = d * math.log(s)
    if log_n < math.log(t):
        raise DomainError(f"grid has S^D = {s}^{d} < T = {t} points")
    t_root = math.exp(math.log(t) / d)
    grid_term = math.sqrt(2.0 * math.log(lk) / t_root) * (
        2.0 * math.sqrt(math.log(2.0) + log_n) + 15.0 * math.sqrt(d)
    )
    finite_term = math.sqrt(2.0) * sigma * (math.sqrt(log_n) - horizon_correction(t))
    return grid_term + finite_term


def report(kind, **inputs):
    """Evaluate bound ``kind`` and wrap it in a :class:`BoundReport`."""
    fn = {
        "thm1_spread": lambda: thm1_regret_bound(inputs["N"], inputs["T"]),
        "cor1_normreg": lambda: cor1_normreg_bound(inputs["N"], inputs["T"]),
        "lower_iid": lambda: lower_bound_iid(inputs["N"], inputs["T"]),
        "lower_prior_independent": lambda: lower_bound_prior_independent(inputs["N"], inputs["T"]),
        "thm2_continuous": lambda: thm2_continuous_bound(inputs["D"], inputs["T"], inputs["L_k"], inputs["sigma"]),
        "grunewalder": lambda: grunewalder_bound(inputs["D"], inputs["T"], inputs["L_k"]),
    }
    if kind not in fn:
        raise DomainError(f"unknown bound kind {kind!r}")
    return BoundReport(kind, dict(inputs), fn[kind]())


def applicable_bounds(n_arms, horizon, zero_mean):
    """Every finite-domain bound whose preconditions ``(N, T)`` satisfy."""
    out = []
    kinds = ["thm1_spread", "cor1_normreg"] if zero_mean else ["thm1_spread"]
    kinds += ["lower_prior_independent"]
    for kind in kinds:
        try:
            out.append(report(kind, N=int(n_arms), T=int(horizon)))
        except DomainError:
            pass
    return out
