"""Prior sampling and exact noise-free conditioning."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpfewshot.errors import DomainError, InconsistentObservationError
from gpfewshot.gp_model import (
    PosteriorState,
    ProblemInstance,
    condition,
    factorize,
    posterior_sd,
    sample_function,
)

from conftest import random_cov


def batch_condition(mean, cov, arms, values):
    """Schur-complement oracle: condition on all ``arms`` at once."""
    arms = np.asarray(arms)
    k = cov[np.ix_(arms, arms)]
    cross = cov[:, arms]
    sol = np.linalg.solve(k, np.asarray(values) - mean[arms])
    return mean + cross @ sol, cov - cross @ np.linalg.solve(k, cross.T)


def state_for(cov, mean=None):
    n = len(cov)
    mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
    return PosteriorState.from_instance(ProblemInstance(n, n, mean, cov))


class TestProblemInstance:
    def test_rejects_bad_shapes(self):
        with pytest.raises(DomainError):
            ProblemInstance(3, 2, np.zeros(2), np.eye(3))
        with pytest.raises(DomainError):
            ProblemInstance(2, 2, np.zeros(2), np.ones((2, 3)))

    def test_rejects_horizon_above_arms(self):
        with pytest.raises(DomainError):
            ProblemInstance(2, 3, np.zeros(2), np.eye(2))

    def test_rejects_indefinite(self):
        with pytest.raises(DomainError):
            ProblemInstance(2, 2, np.zeros(2), [[1.0, 2.0], [2.0, 1.0]])

    def test_var_floor(self):
        inst = ProblemInstance(2, 1, np.zeros(2), np.diag([1.0, 3.0]))
        assert inst.var_floor == pytest.approx(2e-6)


class TestSampleFunction:
    def test_degenerate_prior(self):
        inst = ProblemInstance(3, 1, [1.0, 2.0, 3.0], np.zeros((3, 3)))
        s = sample_function(inst, 0)
        np.testing.assert_array_equal(s.values, [1.0, 2.0, 3.0])
        assert (s.f_max, s.f_min, s.f_spread) == (3.0, 1.0, 2.0)

    def test_moments_identity(self):
        inst = ProblemInstance(3, 1, np.zeros(3), np.eye(3))
        rng = np.random.default_rng(1)
        draws = np.array([sample_function(inst, rng).values for _ in range(100_000)])
        assert np.all(np.abs(draws.mean(axis=0)) <= 4 / np.sqrt(1e5))
        np.testing.assert_allclose(draws.var(axis=0), 1.0, rtol=0.05)

    def test_correlation(self):
        inst = ProblemInstance(2, 1, np.zeros(2), [[1.0, 0.5], [0.5, 1.0]])
        rng = np.random.default_rng(2)
        draws = np.array([sample_function(inst, rng).values for _ in range(100_000)])
        assert abs(np.corrcoef(draws.T)[0, 1] - 0.5) < 0.01

    def test_deterministic_in_seed(self):
        inst = ProblemInstance(4, 1, np.zeros(4), random_cov(np.random.default_rng(3), 4))
        np.testing.assert_array_equal(sample_function(inst, 99).values, sample_function(inst, 99).values)

    def test_singular_covariance_factor(self):
        x = np.linspace(0, 1, 200)
        cov = np.exp(-0.5 * (x[:, None] - x[None, :]) ** 2 / 0.3**2)
        f = factorize(cov)
        assert f.rank < 200
        recon = np.empty_like(cov)
        recon[np.ix_(f.perm, f.perm)] = f.lower @ f.lower.T
        np.testing.assert_allclose(recon, cov + f.jitter * np.eye(200), atol=1e-8)


class TestCondition:
    def test_hand_example(self):
        st0 = state_for(np.array([[1.0, 0.5], [0.5, 1.0]]))
        st1 = condition(st0, 0, 1.0)
        np.testing.assert_allclose(st1.mean, [1.0, 0.5], atol=1e-15)
        np.testing.assert_allclose(st1.cov, [[0.0, 0.0], [0.0, 0.75]], atol=1e-15)

    def test_independent_arm_untouched(self):
        st1 = condition(state_for(np.eye(2)), 0, 7.0)
        assert st1.mean[1] == 0.0 and st1.cov[1, 1] == 1.0 and st1.cov[0, 1] == 0.0

    def test_input_state_not_mutated(self):
        st0 = state_for(np.eye(2))
        condition(st0, 0, 1.0)
        np.testing.assert_array_equal(st0.cov, np.eye(2))

    def test_sequential_equals_batch(self, rng):
        for _ in range(100):
            cov = random_cov(rng, 5, ridge=0.05)
            mean = rng.normal(size=5)
            y = rng.normal(size=2)
            st1 = condition(condition(state_for(cov, mean), 0, y[0]), 1, y[1])
            m_ref, c_ref = batch_condition(mean, cov, [0, 1], y)
            np.testing.assert_allclose(st1.mean, m_ref, atol=1e-8)
            np.testing.assert_allclose(st1.cov, c_ref, atol=1e-8)

    def test_order_independence(self, rng):
        cov = random_cov(rng, 6, ridge=0.05)
        y = rng.normal(size=6)
        ref = None
        for perm in (np.arange(4), np.array([3, 1, 0, 2]), np.array([2, 3, 1, 0])):
            s = state_for(cov)
            for a in perm:
                s = condition(s, a, y[a])
            if ref is None:
                ref = s
            np.testing.assert_allclose(s.mean, ref.mean, atol=1e-8)
            np.testing.assert_allclose(s.cov, ref.cov, atol=1e-8)

    @given(st.integers(0, 2**32 - 1))
    def test_interpolation_psd_and_variance_monotone(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        cov = random_cov(rng, n)
        inst = ProblemInstance(n, n, np.zeros(n), cov)
        f = sample_function(inst, rng).values
        s = PosteriorState.from_instance(inst)
        slack = 1e-8 * np.trace(cov) / n
        for a in rng.permutation(n):
            before = np.diag(s.cov).copy()
            s = condition(s, a, f[a])
            for b, y in s.observed.items():
                assert abs(s.mean[b] - y) <= 1e-8 and s.cov[b, b] <= 1e-8
            assert np.linalg.eigvalsh(0.5 * (s.cov + s.cov.T))[0] >= -slack
            assert np.all(np.diag(s.cov) <= before + 1e-10)

    def test_reobservation_consistent(self):
        s = condition(state_for(np.eye(2)), 0, 1.5)
        assert condition(s, 0, 1.5) is s

    def test_reobservation_contradiction(self):
        s = condition(state_for(np.eye(2)), 0, 1.5)
        with pytest.raises(InconsistentObservationError):
            condition(s, 0, 2.5)

    def test_determined_by_correlation(self):
        cov = np.ones((2, 2))
        s = condition(state_for(cov), 0, 0.7)
        with pytest.raises(InconsistentObservationError):
            condition(s, 1, 0.0)
        assert condition(s, 1, 0.7) is s

    def test_bad_arm(self):
        with pytest.raises(DomainError):
            condition(state_for(np.eye(2)), 2, 0.0)


class TestPosteriorSd:
    def test_prior_identity(self):
        s = state_for(np.eye(3))
        assert [posterior_sd(s, a) for a in range(3)] == [1.0, 1.0, 1.0]

    def test_observed_zero(self):
        s = condition(state_for(np.eye(3)), 1, 0.2)
        assert posterior_sd(s, 1) == 0.0

    def test_negative_rounding_clamped(self):
        s = state_for(np.eye(2))
        s.cov[0, 0] = -1e-12
        assert posterior_sd(s, 0) == 0.0
