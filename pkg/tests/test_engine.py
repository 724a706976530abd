"""Compiled and pure-Python episode kernels agree."""

import numpy as np
import pytest

from gpfewshot import engine
from gpfewshot.errors import InconsistentObservationError
from gpfewshot.gp_model import ProblemInstance, sample_function
from gpfewshot.policies import start_threshold

from conftest import random_cov

BACKENDS = engine.available_backends()
needs_compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="extension not built")


def run(inst, values, policy, backend, priority=None):
    return engine.run_policy(inst.covariance, inst.mean, values, inst.horizon, policy, inst.var_floor,
                             inst.obs_tol, start_threshold(inst.mean), priority=priority, backend=backend)


class TestBackendSelection:
    def test_python_always_available(self):
        assert "python" in BACKENDS
        assert engine.BACKEND in BACKENDS


@needs_compiled
class TestCrossBackend:
    @pytest.mark.parametrize("policy", ["ei2", "ucb2", "ei", "ucb", "ei2_sum"])
    def test_full_rank_dense(self, policy):
        rng = np.random.default_rng(3)
        for seed in range(20):
            n = int(rng.integers(5, 80))
            inst = ProblemInstance(n, n // 2, rng.normal(size=n), random_cov(rng, n, ridge=0.05))
            f = sample_function(inst, seed).values
            a_c, y_c = run(inst, f, policy, "compiled")
            a_p, y_p = run(inst, f, policy, "python")
            np.testing.assert_array_equal(a_c, a_p)
            np.testing.assert_array_equal(y_c, y_p)

    @pytest.mark.parametrize("policy", ["ei2", "ucb2"])
    def test_diagonal(self, policy):
        inst = ProblemInstance(500, 100, np.zeros(500), np.ones(500))
        f = sample_function(inst, 4).values
        np.testing.assert_array_equal(run(inst, f, policy, "compiled")[0], run(inst, f, policy, "python")[0])

    def test_random_priority(self):
        rng = np.random.default_rng(8)
        inst = ProblemInstance(30, 30, np.zeros(30), np.eye(30))
        prio = rng.permutation(30).astype(float)
        f = sample_function(inst, 1).values
        a_c, _ = run(inst, f, "ei2", "compiled", prio)
        a_p, _ = run(inst, f, "ei2", "python", prio)
        np.testing.assert_array_equal(a_c, a_p)
        np.testing.assert_array_equal(a_c, np.argsort(prio))

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_inconsistent_observation(self, backend):
        inst = ProblemInstance(2, 2, np.zeros(2), np.ones((2, 2)))
        with pytest.raises(InconsistentObservationError):
            run(inst, np.array([1.0, -1.0]), "ei2", backend)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_unvisited_preferred_on_ties(self, backend):
        inst = ProblemInstance(3, 3, np.array([3.0, 1.0, 2.0]), np.zeros((3, 3)))
        actions, obs = run(inst, inst.mean.copy(), "ei2", backend)
        assert sorted(actions.tolist()) == [0, 1, 2]
