"""Acquisition rules, tie handling and episode-level invariants."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpfewshot.errors import ContractError, DomainError, ExhaustedError
from gpfewshot.gauss_math import ei, ei_scaled
from gpfewshot.gp_model import PosteriorState, ProblemInstance, condition, sample_function
from gpfewshot.policies import (
    INDEX_POLICIES,
    Trajectory,
    branch_scores,
    ei2_select,
    episode_rngs,
    first_action,
    one_sided_ei_select,
    one_sided_ucb_select,
    random_without_replacement_select,
    run_episode,
    run_trajectory,
    run_trajectory_reference,
    select,
    ucb2_select,
)

from conftest import random_cov


def fresh(mean, cov):
    mean = np.asarray(mean, dtype=float)
    return PosteriorState.from_instance(ProblemInstance(len(mean), len(mean), mean, cov))


def pseudo_traj(value):
    """Trajectory whose running max and min both equal ``value``."""
    return Trajectory([0], [value], value, value, set())


class TestTrajectory:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    def test_incremental_extremes(self, ys):
        traj = Trajectory()
        for i, y in enumerate(ys):
            traj.append(i, y)
            assert traj.running_max == max(ys[: i + 1])
            assert traj.running_min == min(ys[: i + 1])
            assert traj.spread >= 0.0

    def test_from_arrays(self):
        t = Trajectory.from_arrays([2, 0], [1.5, -1.0])
        assert (t.running_max, t.running_min, t.visited, t.t) == (1.5, -1.0, {0, 2}, 2)


class TestEi2Select:
    def test_picks_unobserved_arm(self):
        s = condition(fresh([0, 0], np.eye(2)), 0, 0.0)
        traj = pseudo_traj(0.0)
        choice = ei2_select(s, traj)
        assert choice.arm == 1
        np.testing.assert_allclose(choice.score, ei(0.0), rtol=1e-15)

    def test_all_observed_tie(self):
        s = fresh([0, 0, 0], np.eye(3))
        for a in range(3):
            s = condition(s, a, 0.0)
        choice = ei2_select(s, pseudo_traj(0.0))
        assert choice.arm == 0 and choice.score == 0.0

    def test_up_branch_dominates(self):
        s = fresh([0, 0, 0.5], np.eye(3))
        choice = ei2_select(s, pseudo_traj(0.0))
        assert choice.arm == 2 and choice.side == "up"
        assert ei_scaled(0, 0.5, 1) > ei_scaled(0, 0, 1) > ei_scaled(0, -0.5, 1)

    def test_requires_history(self):
        with pytest.raises(ContractError):
            ei2_select(fresh([0, 0], np.eye(2)), Trajectory())

    def test_score_consistency_and_argmax(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 21))
            s = fresh(rng.normal(size=n), random_cov(rng, n))
            ys = rng.normal(size=2)
            traj = Trajectory([0, 1], list(ys), ys.max(), ys.min(), {0, 1})
            choice = ei2_select(s, traj)
            var = np.maximum(np.diag(s.cov), 0.0)
            up = [ei_scaled(traj.running_max, s.mean[a], math.sqrt(var[a])) for a in range(n)]
            down = [ei_scaled(-traj.running_min, -s.mean[a], math.sqrt(var[a])) for a in range(n)]
            best = [max(u, d) for u, d in zip(up, down)]
            assert abs(choice.score - best[choice.arm]) <= 1e-12
            assert all(best[choice.arm] >= b - 1e-12 for b in best)


class TestUcb2Select:
    def test_symmetric_fresh_state(self):
        s = fresh([0, 0, 0, 0], np.eye(4))
        choice = ucb2_select(s, pseudo_traj(0.0), n_arms=4)
        assert choice.arm == 0
        np.testing.assert_allclose(choice.score, math.sqrt(2 * math.log(4)), rtol=1e-15)

    def test_mean_advantage(self):
        s = fresh([1, 0], np.eye(2))
        choice = ucb2_select(s, pseudo_traj(0.0), n_arms=2)
        assert (choice.arm, choice.side) == (0, "up")
        np.testing.assert_allclose(choice.score, 1 + math.sqrt(2 * math.log(2)), rtol=1e-15)

    def test_observed_arm_scores_literally(self):
        s = condition(fresh([0, 0], np.eye(2)), 0, 0.8)
        up, down = branch_scores("ucb2", s.mean, s.variances, 0.8, 0.8, 2)
        assert up[0] == 0.0 and down[0] == 0.0
        assert ucb2_select(s, pseudo_traj(0.8)).arm == 1

    def test_n_arms_mismatch(self):
        with pytest.raises(DomainError):
            ucb2_select(fresh([0, 0], np.eye(2)), pseudo_traj(0.0), n_arms=3)


class TestOneSided:
    def test_matches_ei2_on_symmetric_state(self):
        s = fresh(np.zeros(5), np.diag([1.0, 3.0, 2.0, 3.0, 0.5]))
        t = pseudo_traj(0.0)
        assert one_sided_ei_select(s, t).arm == ei2_select(s, t).arm == 1
        assert one_sided_ucb_select(s, t).arm == ucb2_select(s, t).arm == 1

    def test_down_branch_difference(self):
        s = fresh([-1.0, 0.0], np.eye(2))
        t = pseudo_traj(1.0)  # high running minimum makes arm 0's down branch attractive
        assert one_sided_ei_select(s, t).arm == 1
        choice = ei2_select(s, t)
        assert (choice.arm, choice.side) == (0, "down")

    def test_all_observed(self):
        s = fresh([0, 0], np.eye(2))
        s = condition(condition(s, 0, 0.0), 1, 0.0)
        assert one_sided_ei_select(s, pseudo_traj(0.0)).arm == 0
        assert one_sided_ucb_select(s, pseudo_traj(0.0)).arm == 0


class TestRandomWithoutReplacement:
    def test_single_arm(self, rng):
        assert random_without_replacement_select(Trajectory(), 1, rng) == 0

    def test_forced_choice(self, rng):
        traj = Trajectory.from_arrays([0, 2], [0.0, 0.0])
        assert all(random_without_replacement_select(traj, 3, rng) == 1 for _ in range(20))

    def test_uniform_first_pick(self):
        rng = np.random.default_rng(5)
        picks = np.array([random_without_replacement_select(Trajectory(), 10, rng) for _ in range(100_000)])
        freq = np.bincount(picks, minlength=10) / picks.size
        assert np.all(np.abs(freq - 0.1) <= 0.004)

    def test_exhausted(self, rng):
        with pytest.raises(ExhaustedError):
            random_without_replacement_select(Trajectory.from_arrays([0, 1], [0, 0]), 2, rng)

    def test_never_repeats(self, rng):
        inst = ProblemInstance(30, 30, np.zeros(30), np.ones(30))
        traj = run_trajectory(inst, rng.normal(size=30), "random_wor", rng)
        assert sorted(traj.actions) == list(range(30))


class TestFirstAction:
    @pytest.mark.parametrize("policy", INDEX_POLICIES)
    def test_symmetric(self, policy):
        assert first_action(fresh(np.zeros(4), np.eye(4)), policy).arm == 0

    @pytest.mark.parametrize("policy", ["ei2", "ucb2"])
    def test_larger_variance_wins(self, policy):
        assert first_action(fresh([0, 0], np.diag([1.0, 4.0])), policy).arm == 1

    def test_golden_ei2(self):
        # start threshold 0.25; arm 0 down = ei(-0.25) ties arm 1 up = ei(-0.25)
        choice = first_action(fresh([0.0, 0.5], np.eye(2)), "ei2")
        assert (choice.arm, choice.side) == (0, "down")
        np.testing.assert_allclose(choice.score, 0.5363446982235802, rtol=1e-14)

    def test_golden_ucb2(self):
        choice = first_action(fresh([0.0, 0.5], np.eye(2)), "ucb2")
        assert (choice.arm, choice.side) == (0, "down")
        np.testing.assert_allclose(choice.score, 0.25 + math.sqrt(2 * math.log(2)), rtol=1e-14)

    def test_unknown_policy(self):
        with pytest.raises(DomainError):
            first_action(fresh([0, 0], np.eye(2)), "thompson")


class TestEpisodes:
    def test_deterministic_function(self):
        inst = ProblemInstance(3, 3, [3.0, 1.0, 2.0], np.zeros((3, 3)))
        traj = run_episode(inst, "ei2", 0)
        assert sorted(traj.observations) == [1.0, 2.0, 3.0]
        assert (traj.running_max, traj.running_min) == (3.0, 1.0)

    @pytest.mark.parametrize("policy", ["ei2", "ucb2"])
    def test_identity_prior_index_order(self, policy):
        n = 25
        inst = ProblemInstance(n, n, np.zeros(n), np.eye(n))
        for seed in range(5):
            f_rng, _ = episode_rngs(seed)
            values = sample_function(inst, f_rng).values
            traj = run_episode(inst, policy, seed)
            assert traj.actions == list(range(n))
            assert traj.running_max == values.max() and traj.running_min == values.min()

    @pytest.mark.parametrize("policy", ["ei2", "ucb2", "ei", "ucb", "ei2_sum", "random_wor"])
    def test_seed_determinism(self, policy):
        inst = ProblemInstance(40, 15, np.zeros(40), random_cov(np.random.default_rng(0), 40))
        a = run_episode(inst, policy, 77)
        b = run_episode(inst, policy, 77)
        assert a.actions == b.actions and a.observations == b.observations

    @pytest.mark.parametrize("policy", ["ei2", "ucb2"])
    def test_sign_flip_symmetry(self, policy):
        rng = np.random.default_rng(11)
        for seed in range(200):
            n = int(rng.integers(2, 51))
            inst = ProblemInstance(n, min(n, 12), np.zeros(n), random_cov(rng, n, ridge=0.01))
            f = sample_function(inst, seed).values
            a = run_trajectory(inst, f, policy)
            b = run_trajectory(inst, -f, policy)
            assert a.actions == b.actions

    @pytest.mark.parametrize("policy", ["ei2", "ucb2"])
    def test_common_shift_invariance(self, policy):
        rng = np.random.default_rng(12)
        for seed in range(60):
            n = int(rng.integers(2, 41))
            mean = rng.normal(size=n)
            cov = random_cov(rng, n, ridge=0.01)
            inst = ProblemInstance(n, min(n, 10), mean, cov)
            shifted = ProblemInstance(n, min(n, 10), mean + 3.0, cov)
            f = sample_function(inst, seed).values
            a = run_trajectory(inst, f, policy)
            b = run_trajectory(shifted, f + 3.0, policy)
            assert a.actions == b.actions

    def test_random_tie_break_needs_rng(self):
        inst = ProblemInstance(3, 2, np.zeros(3), np.eye(3))
        with pytest.raises(ContractError):
            run_trajectory(inst, np.zeros(3), "ei2", rng=None, tie_break="random")

    def test_random_tie_break_spreads_first_pick(self):
        inst = ProblemInstance(5, 1, np.zeros(5), np.eye(5))
        firsts = {run_episode(inst, "ei2", s, tie_break="random").actions[0] for s in range(60)}
        assert firsts == set(range(5))

    @pytest.mark.parametrize("policy", ["ei2", "ucb2", "ei", "ucb", "ei2_sum"])
    def test_engine_matches_reference(self, policy):
        rng = np.random.default_rng(21)
        for seed in range(15):
            n = int(rng.integers(5, 31))
            inst = ProblemInstance(n, n // 2, rng.normal(size=n), random_cov(rng, n, ridge=0.05))
            f = sample_function(inst, seed).values
            fast = run_trajectory(inst, f, policy)
            ref = run_trajectory_reference(inst, f, policy)
            assert fast.actions == ref.actions

    def test_select_dispatch(self, rng):
        s = fresh(np.zeros(3), np.eye(3))
        assert select("ei2", s, Trajectory()).arm == 0
        assert select("random_wor", s, Trajectory(), rng=rng).arm in (0, 1, 2)
        with pytest.raises(ContractError):
            select("random_wor", s, Trajectory())
