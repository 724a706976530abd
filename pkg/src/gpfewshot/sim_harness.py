"""Seeded Monte Carlo experiments, quadrature oracles and worst-case constructions.

Episode ``i`` of an experiment with master seed ``s`` draws all of its
randomness from ``np.random.SeedSequence([s, i])`` (a 128-bit hash of the
pair), and results are folded in index order, so reports do not depend on
the number of worker processes.
"""

from concurrent.futures import ProcessPoolExecutor
import dataclasses
from dataclasses import dataclass, field
import math
import multiprocessing
import os

import numpy as np
from scipy import integrate, special

from . import bounds
from .continuous import (
    MAX_GRID_POINTS, ContinuousInstance, ContinuousSetup, KernelSpec, cell_centers, kernel_matrix, run_on_grid,
)
from .errors import ConfigError, ContractError, DomainError, GPFewShotError, ResourceError
from .gauss_math import ei_scaled
from .gp_model import PosteriorState, ProblemInstance, condition, sample_function
from .policies import POLICY_KINDS, Trajectory, episode_rngs, run_trajectory

SOURCE_KINDS = ("explicit", "iid", "spike", "grid", "random_psd", "continuous")
#: zero-prior episodes used to locate the least visited arm in the spike demo
SPIKE_CALIBRATION_EPISODES = 10_000
_MAX_SEED = 2**64 - 1


# ---------------------------------------------------------------------------
# oracles


def expected_max_iid(k):
    """``E[max of k i.i.d. standard normals]`` by adaptive quadrature.

    Integrates ``x k phi(x) Phi(x)^(k-1)`` over ``[-12, 12]`` with the
    density evaluated in log space (``log_ndtr``) so that large ``k`` does
    not underflow.  Absolute error is below ``1e-9``.
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    if k == 1:
        return 0.0
    log_k = math.log(k)

    def density(x):
        return math.exp(log_k - 0.5 * x * x - 0.5 * math.log(2.0 * math.pi) + (k - 1) * special.log_ndtr(x))

    mode = math.sqrt(2.0 * log_k)
    val, err = integrate.quad(lambda x: x * density(x), -12.0, 12.0, points=[0.0, mode],
                              epsabs=1e-12, epsrel=1e-12, limit=500)
    if err > 1e-9:
        raise ArithmeticError(f"quadrature error estimate {err:.2e} exceeds 1e-9 at k={k}")
    return val


def half_normal_mean(variance=1.0):
    """``E[max(Z, 0)]`` for ``Z ~ N(0, variance)``."""
    return math.sqrt(variance) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# instance builders


def iid_instance(n_arms, horizon):
    """Independent standard normal arms (diagonal prior)."""
    return ProblemInstance(n_arms, horizon, np.zeros(n_arms), np.ones(n_arms))


def spike_instance(n_arms, spike_index, spike_variance, horizon=1):
    """Zero prior except ``Sigma[K, K] = spike_variance``."""
    n_arms = int(n_arms)
    if not 0 <= spike_index < n_arms:
        raise DomainError(f"spike index {spike_index} outside [0, {n_arms})")
    if not spike_variance > 0.0:
        raise DomainError(f"spike variance must be > 0, got {spike_variance!r}")
    var = np.zeros(n_arms)
    var[spike_index] = spike_variance
    return ProblemInstance(n_arms, horizon, np.zeros(n_arms), var)


def _check_dense(n_arms):
    if int(n_arms) > MAX_GRID_POINTS:
        raise ResourceError(
            f"N = {int(n_arms)} exceeds the dense covariance budget of {MAX_GRID_POINTS} arms; "
            "use a smaller instance"
        )


def grid_instance(kernel, n_points, horizon):
    """``n_points`` cell centres of ``[0, 1]`` under a 1-D kernel."""
    _check_dense(n_points)
    if kernel.dim != 1:
        raise DomainError("grid sources are one-dimensional; use a continuous source for D > 1")
    pts = cell_centers(int(n_points))[:, None]
    return ProblemInstance(n_points, horizon, np.zeros(n_points), kernel_matrix(kernel, pts), trusted=True)


def random_psd_instance(n_arms, horizon, seed, rank=None):
    """Dense Wishart-type covariance ``W W^T / r`` with standard normal ``W (N, r)``."""
    _check_dense(n_arms)
    rank = n_arms if rank is None else int(rank)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    w = rng.standard_normal((n_arms, rank))
    cov = w @ w.T / rank
    cov = 0.5 * (cov + cov.T)
    return ProblemInstance(n_arms, horizon, np.zeros(n_arms), cov, trusted=True)


# ---------------------------------------------------------------------------
# configuration

_SOURCE_KEYS = {
    "explicit": ({"kind", "mean", "covariance", "horizon"}, set()),
    "iid": ({"kind", "n_arms", "horizon"}, set()),
    "spike": ({"kind", "n_arms", "horizon"}, {"spike_index", "spike_variance"}),
    "grid": ({"kind", "n_arms", "horizon", "length_scale"}, {"kernel", "variance"}),
    "random_psd": ({"kind", "n_arms", "horizon"}, {"rank", "seed"}),
    "continuous": ({"kind", "horizon", "length_scale"}, {"kernel", "variance", "dim"}),
}


@dataclass(frozen=True)
class SimConfig:
    """One experiment: an instance source, a policy and a seed.

    ``source`` is a mapping with a ``kind`` key from ``SOURCE_KINDS`` and
    the keys of that kind, for example ``{"kind": "iid", "n_arms": 2000,
    "horizon": 500}``.
    """

    source: dict
    policy: str = "ei2"
    episodes: int = 100
    master_seed: int = 0
    tie_break: str = "lowest"

    def __post_init__(self):
        src = dict(self.source)
        kind = src.get("kind")
        if kind not in _SOURCE_KEYS:
            raise ConfigError(f"unknown source kind {kind!r}; expected one of {SOURCE_KINDS}", "instance.kind")
        required, optional = _SOURCE_KEYS[kind]
        for key in src:
            if key not in required | optional:
                raise ConfigError("unknown key", f"instance.{key}")
        for key in sorted(required - set(src)):
            raise ConfigError("missing required key", f"instance.{key}")
        object.__setattr__(self, "source", src)
        if self.policy not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICY_KINDS}", "policy.kind")
        if int(self.episodes) != self.episodes or self.episodes < 1:
            raise ConfigError(f"episodes must be a positive integer, got {self.episodes!r}", "simulation.episodes")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed <= _MAX_SEED:
            raise ConfigError("master_seed must be an integer in [0, 2^64)", "simulation.master_seed")
        if self.tie_break not in ("lowest", "random"):
            raise ConfigError("tie_break must be 'lowest' or 'random'", "policy.tie_break")

    @property
    def kind(self):
        return self.source["kind"]


def _kernel_from(src, dim=1):
    return KernelSpec(src.get("kernel", "sqexp"), src["length_scale"], src.get("variance", 1.0), dim)


def build_instance(config):
    """Finite instance (or continuous setup) described by ``config.source``."""
    src = config.source
    kind = src["kind"]
    if kind == "explicit":
        return ProblemInstance(len(src["mean"]), src["horizon"], src["mean"], src["covariance"])
    if kind == "iid":
        return iid_instance(src["n_arms"], src["horizon"])
    if kind == "spike":
        return spike_instance(src["n_arms"], src.get("spike_index", 0), src.get("spike_variance", 1.0), src["horizon"])
    if kind == "grid":
        return grid_instance(_kernel_from(src), src["n_arms"], src["horizon"])
    if kind == "random_psd":
        return random_psd_instance(src["n_arms"], src["horizon"], src.get("seed", 0), src.get("rank"))
    cont = ContinuousInstance(_kernel_from(src, src.get("dim", 1)), src["horizon"])
    return ContinuousSetup.build(cont)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr}


def mean_estimate(x):
    x = np.asarray(x, dtype=float)
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return Estimate(float(np.mean(x)), se)


def ratio_estimate(num, den):
    """``mean(num) / mean(den)`` with a delta-method standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    a, b = float(num.mean()), float(den.mean())
    if b == 0.0:
        return Estimate(math.nan, math.nan)
    r = a / b
    if n < 2:
        return Estimate(r, math.nan)
    cov = np.cov(np.vstack([num, den]), ddof=1)
    var = (cov[0, 0] - 2.0 * r * cov[0, 1] + r * r * cov[1, 1]) / (b * b * n)
    return Estimate(r, math.sqrt(max(var, 0.0)))


@dataclass(frozen=True)
class RegretReport:
    """Monte Carlo summary of one experiment.

    ``spread_ratio`` estimates ``E[found spread] / E[true spread]``;
    ``normreg`` is ``1 - E[Y_max] / E[F_max]``.  For i.i.d. sources
    ``fhat_quadrature`` and ``normreg_quadrature`` use the exact expected
    maximum instead of its Monte Carlo estimate.
    """

    mean_yhat: Estimate
    mean_fhat: Estimate
    mean_spread_y: Estimate
    mean_spread_f: Estimate
    normreg: Estimate
    spread_ratio: Estimate
    applicable_bounds: list
    episodes: int
    master_seed: int
    policy: str
    source: dict
    fhat_quadrature: float = None
    normreg_quadrature: Estimate = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "policy": self.policy,
            "source": _jsonable(self.source),
            "episodes": self.episodes,
            "master_seed": self.master_seed,
            "mean_yhat": self.mean_yhat.to_dict(),
            "mean_fhat": self.mean_fhat.to_dict(),
            "mean_spread_y": self.mean_spread_y.to_dict(),
            "mean_spread_f": self.mean_spread_f.to_dict(),
            "normreg_estimate": self.normreg.to_dict(),
            "spread_ratio": self.spread_ratio.to_dict(),
            "applicable_bounds": [b.to_dict() for b in self.applicable_bounds],
        }
        if self.fhat_quadrature is not None:
            out["fhat_quadrature"] = self.fhat_quadrature
            out["normreg_quadrature"] = self.normreg_quadrature.to_dict()
        if self.extra:
            out["extra"] = _jsonable(self.extra)
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# episodes


class EpisodeError(GPFewShotError):
    """An episode failed; carries the episode index and its seed."""

    def __init__(self, index, seed, cause):
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"episode {index} (seed {seed}) failed: {cause}")


def episode_seed(master_seed, index):
    """Seed sequence of episode ``index``; hashes the pair to 128 bits."""
    return np.random.SeedSequence([int(master_seed), int(index)])


@dataclass(frozen=True)
class EpisodeResult:
    """Extremes of one episode; ``traj`` is kept only when requested."""

    yhat: float
    ymin: float
    fhat: float
    fmin: float
    traj: Trajectory = None


def _episode(target, policy, seed, tie_break, keep):
    if isinstance(target, ContinuousSetup):
        traj, fhat, fmin = run_on_grid(target, policy, seed, tie_break)
    else:
        f_rng, p_rng = episode_rngs(seed)
        sample = sample_function(target, f_rng)
        traj = run_trajectory(target, sample.values, policy, p_rng, tie_break)
        fhat, fmin = sample.f_max, sample.f_min
    if not traj.running_max <= fhat:
        raise AssertionError(f"found maximum {traj.running_max!r} exceeds the true maximum {fhat!r}")
    if not traj.running_min >= fmin:
        raise AssertionError(f"found minimum {traj.running_min!r} is below the true minimum {fmin!r}")
    return EpisodeResult(traj.running_max, traj.running_min, fhat, fmin, traj if keep else None)


# worker-process globals, inherited through fork
_WORK = {}


def _run_chunk(bounds_):
    lo, hi = bounds_
    w = _WORK
    out = []
    for i in range(lo, hi):
        seed = episode_seed(w["master_seed"], i)
        try:
            out.append(_episode(w["target"], w["policy"], seed, w["tie_break"], w["keep"]))
        except (GPFewShotError, AssertionError, ArithmeticError) as exc:
            raise EpisodeError(i, (w["master_seed"], i), exc) from exc
    return out


def resolve_threads(threads=None):
    """Worker count: ``GPFEWSHOT_THREADS`` overrides ``threads``; default 1."""
    env = os.environ.get("GPFEWSHOT_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"GPFEWSHOT_THREADS must be an integer, got {env!r}") from None
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        origin = "GPFEWSHOT_THREADS" if env else "threads"
        raise ConfigError(f"{origin} must be >= 1, got {threads}")
    return threads


def run_episodes(target, policy, episodes, master_seed, tie_break="lowest", threads=1, keep=False):
    """Run episodes ``0 .. episodes-1`` and return their results in index order."""
    _WORK.update(target=target, policy=policy, master_seed=master_seed, tie_break=tie_break, keep=keep)
    try:
        if threads <= 1 or episodes < 2 or "fork" not in multiprocessing.get_all_start_methods():
            return _run_chunk((0, episodes))
        n_chunks = min(episodes, 4 * threads)
        edges = np.linspace(0, episodes, n_chunks + 1).astype(int)
        chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            return [r for part in pool.map(_run_chunk, chunks) for r in part]
    finally:
        _WORK.clear()


def summarize(results, config, extra=None):
    yhat = np.array([r.yhat for r in results])
    ymin = np.array([r.ymin for r in results])
    fhat = np.array([r.fhat for r in results])
    fmin = np.array([r.fmin for r in results])
    spread_y = yhat - ymin
    spread_f = fhat - fmin
    ratio = ratio_estimate(yhat, fhat)
    normreg = Estimate(1.0 - ratio.value, ratio.stderr)
    spread_ratio = ratio_estimate(spread_y, spread_f)
    src = config.source
    kind = src["kind"]
    fq = nq = None
    applicable = []
    if kind == "continuous":
        spec = _kernel_from(src, src.get("dim", 1))
        from .continuous import lipschitz_constant

        for name, kw in (
            ("thm2_continuous", dict(D=spec.dim, T=src["horizon"], L_k=lipschitz_constant(spec), sigma=spec.sigma)),
            ("grunewalder", dict(D=spec.dim, T=src["horizon"], L_k=lipschitz_constant(spec))),
        ):
            try:
                applicable.append(bounds.report(name, **kw))
            except DomainError:
                pass
    else:
        n = len(src["mean"]) if kind == "explicit" else int(src["n_arms"])
        zero_mean = kind != "explicit" or not np.any(np.asarray(src["mean"], dtype=float))
        applicable = bounds.applicable_bounds(n, src["horizon"], zero_mean)
        if kind == "iid":
            try:
                applicable.append(bounds.report("lower_iid", N=n, T=int(src["horizon"])))
            except DomainError:
                pass
            fq = expected_max_iid(n)
            ym = mean_estimate(yhat)
            nq = Estimate(1.0 - ym.value / fq, ym.stderr / fq)
    return RegretReport(
        mean_yhat=mean_estimate(yhat),
        mean_fhat=mean_estimate(fhat),
        mean_spread_y=mean_estimate(spread_y),
        mean_spread_f=mean_estimate(spread_f),
        normreg=normreg,
        spread_ratio=spread_ratio,
        applicable_bounds=applicable,
        episodes=len(results),
        master_seed=int(config.master_seed),
        policy=config.policy,
        source=dict(src),
        fhat_quadrature=fq,
        normreg_quadrature=nq,
        extra=dict(extra or {}),
    )


def run_experiment(config, threads=1, target=None, keep_trajectories=False):
    """Run ``config.episodes`` seeded episodes and aggregate them.

    Parameters
    ----------
    config : SimConfig
    threads : int
        Worker processes; the report is identical for any value.
    target : ProblemInstance or ContinuousSetup, optional
        Prebuilt instance for ``config.source`` (saves rebuilding).
    keep_trajectories : bool
        Also return the per-episode trajectories.

    Returns
    -------
    RegretReport, or ``(RegretReport, list of Trajectory)``
    """
    target = build_instance(config) if target is None else target
    results = run_episodes(target, config.policy, int(config.episodes), int(config.master_seed),
                           config.tie_break, threads, keep_trajectories)
    extra = {}
    if isinstance(target, ContinuousSetup):
        from .continuous import refinement_correction

        regret = np.array([r.fhat - r.yhat for r in results])
        est = mean_estimate(regret)
        extra = {
            "continuous_regret": est.to_dict(),
            "refinement_correction": refinement_correction(target.cont),
            "grid_sides": target.sampler.sides,
        }
    report = summarize(results, config, extra)
    if keep_trajectories:
        return report, [r.traj for r in results]
    return report


# ---------------------------------------------------------------------------
# constructions


def visit_counts(n_arms, horizon, policy, episodes, master_seed):
    """How often each arm is visited by ``policy`` under the all-zero prior."""
    zero = ProblemInstance(n_arms, horizon, np.zeros(n_arms), np.zeros(n_arms))
    counts = np.zeros(n_arms, dtype=np.int64)
    values = np.zeros(n_arms)
    for i in range(episodes):
        _, p_rng = episode_rngs(episode_seed(master_seed, i))
        traj = run_trajectory(zero, values, policy, p_rng)
        counts[list(traj.visited)] += 1
    return counts


def adversarial_spike_demo(n_arms, horizon, policy, episodes, seed,
                           calibration_episodes=SPIKE_CALIBRATION_EPISODES, spike_variance=1.0, threads=1):
    """Prior-independent lower bound: put the spike where the policy looks least.

    Visit frequencies are estimated on ``calibration_episodes`` zero-prior
    runs (seeded independently of the evaluation runs); the spike goes on
    the least visited arm (lowest index on ties) and the regret of the same
    policy on that spike instance is measured.
    """
    if policy != "random_wor":
        raise ContractError(f"the spike construction needs a prior-independent policy (random_wor), got {policy!r}")
    if horizon > n_arms:
        raise DomainError(f"requires T <= N, got N={n_arms}, T={horizon}")
    calib_seed = int(np.random.SeedSequence([int(seed), 0xCA1B]).generate_state(2, np.uint64)[0])
    counts = visit_counts(n_arms, horizon, policy, calibration_episodes, calib_seed)
    k = int(np.argmin(counts))
    config = SimConfig({"kind": "spike", "n_arms": n_arms, "horizon": horizon, "spike_index": k,
                        "spike_variance": spike_variance}, policy, episodes, seed)
    report = run_experiment(config, threads=threads)
    extra = dict(report.extra)
    extra.update(spike_index=k, calibration_episodes=calibration_episodes,
                 spike_visit_frequency=float(counts[k]) / calibration_episodes,
                 fhat_exact=half_normal_mean(spike_variance))
    return dataclasses.replace(report, extra=extra)


def nonsubmodularity_details(correlation=-0.9, y_first=5.0):
    """All quantities of :func:`nonsubmodularity_demo` as a dict."""
    cov = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, correlation], [0.0, correlation, 1.0]])
    inst = ProblemInstance(3, 3, np.zeros(3), cov)
    state = condition(PosteriorState.from_instance(inst), 0, y_first)
    sd_before = math.sqrt(state.cov[2, 2])
    before = ei_scaled(y_first, state.mean[2], sd_before)
    # solve M[2] + C[2,1] (y - M[1]) / C[1,1] == y_first for y
    y_second = state.mean[1] + (y_first - state.mean[2]) * state.cov[1, 1] / state.cov[2, 1]
    state = condition(state, 1, y_second)
    sd_after = math.sqrt(state.cov[2, 2])
    after = ei_scaled(max(y_first, y_second), state.mean[2], sd_after)
    return {
        "benefit_before": before,
        "benefit_after": after,
        "second_observation": float(y_second),
        "mean_after": float(state.mean[2]),
        "sd_before": sd_before,
        "sd_after": sd_after,
    }


def nonsubmodularity_demo(correlation=-0.9, y_first=5.0):
    """Marginal benefit of arm 2 rises after an extra observation.

    Arm 0 is independent and observed at ``y_first``; arms 1 and 2 have
    unit variance and correlation ``correlation``.  The benefit of arm 2 is
    its expected improvement over the running maximum.  Arm 1 is then
    observed at the value that moves the posterior mean of arm 2 to
    ``y_first``, which makes arm 2 worth sampling again.

    Returns
    -------
    benefit_before, benefit_after : float
    """
    d = nonsubmodularity_details(correlation, y_first)
    before, after = d["benefit_before"], d["benefit_after"]
    if not after > before:
        raise AssertionError(f"benefit did not increase: {before!r} -> {after!r}")
    return before, after
