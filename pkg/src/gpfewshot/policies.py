"""Acquisition policies and the episode loop.

Policy kinds (also the config/CLI names): ``"ei2"``, ``"ucb2"``, ``"ei"``,
``"ucb"``, ``"random_wor"`` and ``"ei2_sum"``.  The two-sided rules score an
arm by the larger of its chance to raise the running maximum and to lower
the running minimum; ``ei2_sum`` adds the two instead.

Selectors see only the posterior, the trajectory, ``N`` and an RNG, never
the hidden function.  Exact score ties go to arms not yet visited, then
to the lowest arm index (or a random order with ``tie_break="random"``).
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _engine_py, engine
from .errors import ContractError, DomainError, ExhaustedError
from .gauss_math import ei_scaled_array
from .gp_model import PosteriorState, condition, sample_function

POLICY_KINDS = ("ei2", "ucb2", "ei", "ucb", "random_wor", "ei2_sum")
INDEX_POLICIES = ("ei2", "ucb2", "ei", "ucb", "ei2_sum")
TWO_SIDED = ("ei2", "ucb2", "ei2_sum")


@dataclass
class Trajectory:
    """Actions, observations and running extremes of one episode."""

    actions: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    running_max: float = None
    running_min: float = None
    visited: set = field(default_factory=set, repr=False)

    @property
    def t(self):
        return len(self.actions)

    @property
    def spread(self):
        return None if self.running_max is None else self.running_max - self.running_min

    def append(self, arm, value):
        arm = int(arm)
        value = float(value)
        self.actions.append(arm)
        self.observations.append(value)
        self.visited.add(arm)
        if self.running_max is None:
            self.running_max = self.running_min = value
        else:
            self.running_max = max(self.running_max, value)
            self.running_min = min(self.running_min, value)

    @classmethod
    def from_arrays(cls, actions, observations):
        acts = [int(a) for a in actions]
        obs = [float(y) for y in observations]
        if not obs:
            return cls()
        return cls(acts, obs, max(obs), min(obs), set(acts))


@dataclass(frozen=True)
class AcquisitionScore:
    arm: int
    score: float
    side: str  # "up" or "down": which branch of the outer max won


def _check_kind(kind):
    if kind not in POLICY_KINDS:
        raise DomainError(f"unknown policy {kind!r}; expected one of {POLICY_KINDS}")


def branch_scores(kind, mean, var, y_max, y_min, n_arms, var_floor=0.0):
    """Per-arm ``(up, down)`` scores; ``down`` is ``None`` for one-sided kinds.

    Variances at or below ``var_floor`` are treated as exactly zero: those
    arms are already determined by the observations.
    """
    var = np.asarray(var, dtype=float)
    var = np.where(var > var_floor, var, 0.0)
    mean = np.asarray(mean, dtype=float)
    if kind in ("ei2", "ei", "ei2_sum"):
        sd = np.sqrt(var)
        up = ei_scaled_array(y_max, mean, sd)
        down = None if kind == "ei" else ei_scaled_array(-y_min, -mean, sd)
        return up, down
    if n_arms < 2:
        raise DomainError(f"UCB scores need N >= 2 (log N > 0), got N = {n_arms}")
    bonus = np.sqrt(var * (2.0 * math.log(n_arms)))
    up = (-y_max + mean) + bonus
    down = None if kind == "ucb" else (y_min - mean) + bonus
    return up, down


def _combine(kind, up, down):
    if down is None:
        return up
    return up + down if kind == "ei2_sum" else np.maximum(up, down)


def _select(kind, state, y_max, y_min, tie_break, rng, visited=()):
    up, down = branch_scores(kind, state.mean, state.variances, y_max, y_min, state.n_arms, state.var_floor)
    score = _combine(kind, up, down)
    priority = _priority(state.n_arms, tie_break, rng)
    seen = np.zeros(state.n_arms, dtype=bool)
    seen[list(visited)] = True
    arm = _engine_py.argmax(score, priority, seen)
    side = "up" if down is None or up[arm] >= down[arm] else "down"
    return AcquisitionScore(arm, float(score[arm]), side)


def _priority(n, tie_break, rng):
    if tie_break == "lowest":
        return None
    if tie_break == "random":
        if rng is None:
            raise ContractError("tie_break='random' needs an rng")
        return rng.permutation(n).astype(float)
    raise DomainError(f"tie_break must be 'lowest' or 'random', got {tie_break!r}")


def _require_history(traj):
    if traj.t == 0:
        raise ContractError("no observations yet; use first_action for t = 0")


def ei2_select(state, traj, tie_break="lowest", rng=None):
    """EI2: maximise ``max(ei(Y_max | M_n, s_n), ei(-Y_min | -M_n, s_n))`` over arms."""
    _require_history(traj)
    return _select("ei2", state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


def ucb2_select(state, traj, n_arms=None, tie_break="lowest", rng=None):
    """UCB2: maximise ``max(M_n - Y_max, Y_min - M_n) + sqrt(2 C_nn log N)``."""
    _require_history(traj)
    if n_arms is not None and n_arms != state.n_arms:
        raise DomainError(f"n_arms={n_arms} does not match the posterior ({state.n_arms})")
    return _select("ucb2", state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


def one_sided_ei_select(state, traj, tie_break="lowest", rng=None):
    _require_history(traj)
    return _select("ei", state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


def one_sided_ucb_select(state, traj, tie_break="lowest", rng=None):
    _require_history(traj)
    return _select("ucb", state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


def ei2_sum_select(state, traj, tie_break="lowest", rng=None):
    """Greedy spread-increase rule: the sum of the two EI branches."""
    _require_history(traj)
    return _select("ei2_sum", state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


def random_without_replacement_select(traj, n_arms, rng):
    """Uniform draw among arms not yet visited."""
    n_arms = int(n_arms)
    visited = traj.visited
    left = n_arms - len(visited)
    if left <= 0:
        raise ExhaustedError(f"all {n_arms} arms already visited")
    if 2 * len(visited) <= n_arms:
        while True:
            arm = int(rng.integers(n_arms))
            if arm not in visited:
                return arm
    unvisited = np.setdiff1d(np.arange(n_arms), np.fromiter(visited, dtype=np.int64))
    return int(unvisited[rng.integers(left)])


def start_threshold(prior_mean):
    """Running max/min used before any observation: the average prior mean."""
    return float(np.mean(prior_mean))


def first_action(state, policy, tie_break="lowest", rng=None):
    """Selection at ``t = 0`` with ``Y_max = Y_min = mean(mu)``."""
    _check_kind(policy)
    if policy == "random_wor":
        if rng is None:
            raise ContractError("random_wor needs an rng")
        return AcquisitionScore(int(rng.integers(state.n_arms)), 0.0, "up")
    start = start_threshold(state.prior_mean)
    return _select(policy, state, start, start, tie_break, rng)


def select(policy, state, traj, rng=None, tie_break="lowest"):
    """Dispatch one selection for any policy kind, including ``t = 0``."""
    _check_kind(policy)
    if policy == "random_wor":
        if rng is None:
            raise ContractError("random_wor needs an rng")
        arm = random_without_replacement_select(traj, state.n_arms, rng)
        return AcquisitionScore(arm, 0.0, "up")
    if traj.t == 0:
        return first_action(state, policy, tie_break, rng)
    return _select(policy, state, traj.running_max, traj.running_min, tie_break, rng, traj.visited)


# ---------------------------------------------------------------------------
# episodes


def run_trajectory(instance, values, policy, rng=None, tie_break="lowest", backend=None):
    """Run ``policy`` for ``instance.horizon`` steps against fixed function ``values``."""
    _check_kind(policy)
    values = np.asarray(values, dtype=float)
    horizon = instance.horizon
    if policy == "random_wor":
        if horizon > instance.n_arms:
            raise ExhaustedError(f"random_wor cannot take {horizon} distinct arms out of {instance.n_arms}")
        traj = Trajectory()
        for _ in range(horizon):
            arm = random_without_replacement_select(traj, instance.n_arms, rng)
            traj.append(arm, values[arm])
        return traj
    if policy in ("ucb", "ucb2") and instance.n_arms < 2:
        raise DomainError("UCB policies need N >= 2")
    priority = _priority(instance.n_arms, tie_break, rng)
    actions, obs = engine.run_policy(
        instance.covariance, instance.mean, values, horizon, policy,
        instance.var_floor, instance.obs_tol, start_threshold(instance.mean),
        priority=priority, backend=backend,
    )
    return Trajectory.from_arrays(actions, obs)


def run_trajectory_reference(instance, values, policy, rng=None, tie_break="lowest"):
    """Step-by-step episode on the full-covariance posterior; slow, used as a cross-check."""
    state = PosteriorState.from_instance(instance)
    traj = Trajectory()
    priority_rng = rng
    for _ in range(instance.horizon):
        choice = select(policy, state, traj, rng=priority_rng, tie_break=tie_break)
        y = float(values[choice.arm])
        traj.append(choice.arm, y)
        state = condition(state, choice.arm, y)
    return traj


def episode_rngs(rng_seed):
    """Independent generators for the function draw and for the policy."""
    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    f_seq, p_seq = seq.spawn(2)
    return np.random.default_rng(f_seq), np.random.default_rng(p_seq)


def run_episode(instance, policy, rng_seed, tie_break="lowest", backend=None):
    """Sample ``F`` once, then alternate select, observe ``F[A_t]`` and condition."""
    f_rng, p_rng = episode_rngs(rng_seed)
    sample = sample_function(instance, f_rng)
    return run_trajectory(instance, sample.values, policy, p_rng, tie_break, backend)
