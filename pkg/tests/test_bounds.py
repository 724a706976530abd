"""Closed-form regret bounds: golden values, validity guards and sweeps."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpfewshot import bounds
from gpfewshot.errors import DomainError


def thm1_direct(n, t):
    """Independent transcription of the finite-domain bound for cross-checking."""
    ln_t, ln_n = math.log(t), math.log(n)
    corr = (1 - t ** (-1 / (2 * math.sqrt(math.pi)))) * math.sqrt(ln_t - math.log(3 * ln_t**1.5))
    return 1 - corr / math.sqrt(ln_n)


class TestThm1:
    def test_figure_anchor(self):
        v = bounds.thm1_regret_bound(1e20, 1e6)
        assert abs(v - 0.572) <= 0.001
        np.testing.assert_allclose(v, 0.5722651844585684, rtol=1e-14)

    def test_equal_500(self):
        v = bounds.thm1_regret_bound(500, 500)
        np.testing.assert_allclose(v, thm1_direct(500, 500), rtol=1e-14)
        assert 0 < v < 1

    def test_more_evaluations_help(self):
        assert bounds.thm1_regret_bound(1e10, 1e4) > bounds.thm1_regret_bound(1e10, 1e6)

    @pytest.mark.parametrize("n,t", [(100, 100), (1000, 499), (499, 600), (1000, 2000)])
    def test_regime_guard(self, n, t):
        with pytest.raises(DomainError, match="N ≥ T ≥ 500"):
            bounds.thm1_regret_bound(n, t)

    @pytest.mark.parametrize("bad", [1.5, float("nan"), float("inf"), True, "x"])
    def test_rejects_non_integers(self, bad):
        with pytest.raises(DomainError):
            bounds.thm1_regret_bound(bad, 500)

    def test_sweep_range_and_monotonicity(self):
        ns = sorted({max(500, round(x)) for x in np.logspace(math.log10(500), 30, 40)})
        for n in ns:
            ts = sorted({min(n, max(500, round(x))) for x in np.logspace(math.log10(500), math.log10(n), 25)})
            vals = [bounds.thm1_regret_bound(n, t) for t in ts]
            assert all(0 < v < 1 for v in vals)
            assert all(b <= a for a, b in zip(vals, vals[1:]))
        for t in (500, 10**4, 10**8):
            vals = [bounds.thm1_regret_bound(n, t) for n in ns if n >= t]
            assert all(b >= a for a, b in zip(vals, vals[1:]))

    @given(st.integers(500, 10**12), st.integers(0, 10**12))
    def test_matches_direct_transcription(self, t, extra):
        n = t + extra
        np.testing.assert_allclose(bounds.thm1_regret_bound(n, t), thm1_direct(n, t), rtol=1e-12)

    def test_convergence_to_envelope(self):
        gaps = [bounds.thm1_regret_bound(10 ** (2 * j), 10**j) - bounds.asymptotic_normreg(10 ** (2 * j), 10**j)
                for j in range(3, 11)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_gap_at_large_scale(self):
        # the gap shrinks slowly: 0.1365 at N=T=1e10, below 0.05 only near 1e40
        gap = bounds.thm1_regret_bound(1e10, 1e10) - bounds.asymptotic_normreg(10**10, 10**10)
        np.testing.assert_allclose(gap, 0.1365, atol=5e-4)
        big = 10**40
        assert bounds.thm1_regret_bound(big, big) - bounds.asymptotic_normreg(big, big) < 0.05


class TestCor1:
    def test_equals_thm1(self):
        for n, t in [(2000, 500), (1e20, 1e6), (10**9, 10**5)]:
            assert bounds.cor1_normreg_bound(n, t) == bounds.thm1_regret_bound(n, t)

    def test_validation_instance(self):
        np.testing.assert_allclose(bounds.cor1_normreg_bound(2000, 500), 0.5377890843826347, rtol=1e-14)


class TestAsymptoticAndLower:
    def test_full_exploration(self):
        assert bounds.asymptotic_normreg(10**6, 10**6) == 0.0
        assert bounds.lower_bound_iid(1000, 1000) == 0.0
        assert bounds.lower_bound_prior_independent(1000, 1000) == 0.0

    def test_twentieth_root(self):
        np.testing.assert_allclose(bounds.asymptotic_normreg(10**25, 10), 0.8, rtol=1e-14)

    def test_lower_iid(self):
        np.testing.assert_allclose(bounds.lower_bound_iid(10**6, 10**3), 1 - math.sqrt(0.5), rtol=1e-14)
        assert bounds.lower_bound_iid(10**6, 10**3) == bounds.asymptotic_normreg(10**6, 10**3)

    def test_prior_independent(self):
        assert bounds.lower_bound_prior_independent(1000, 100) == pytest.approx(0.9, abs=1e-15)
        worst = bounds.lower_bound_prior_independent(1e20, 1e6)
        assert worst == 1 - 1e-14 and worst > bounds.cor1_normreg_bound(1e20, 1e6)

    def test_lower_iid_below_upper_on_sweep(self):
        for n in (10**3, 10**6, 10**12, 10**20):
            for t in (500, 10**3, n):
                if t <= n:
                    assert bounds.lower_bound_iid(n, t) <= bounds.thm1_regret_bound(n, t)

    def test_t_above_n_rejected(self):
        with pytest.raises(DomainError):
            bounds.lower_bound_prior_independent(10, 20)


class TestRequiredHorizon:
    def test_envelope_decade(self):
        np.testing.assert_allclose(bounds.required_T_upper(10**25, 0.8), 10.0, rtol=1e-12)

    def test_envelope_limits(self):
        assert bounds.required_T_upper(10**6, 1 - 1e-9) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(bounds.required_T_upper(10**6, 1e-12), 10**6, rtol=1e-9)

    def test_bisection_golden(self):
        assert bounds.required_T_bisection(1e20, 0.6) == 329953

    @pytest.mark.parametrize("n,r", [(1e20, 0.6), (10**12, 0.7), (10**15, 0.5)])
    def test_bisection_is_minimal(self, n, r):
        t = bounds.required_T_bisection(n, r)
        assert bounds.thm1_regret_bound(n, t) <= r
        if t > 500:
            assert bounds.thm1_regret_bound(n, t - 1) > r

    def test_unreachable(self):
        with pytest.raises(DomainError):
            bounds.required_T_bisection(1000, 0.1)

    @pytest.mark.parametrize("r", [0.0, 1.0, -0.2])
    def test_target_range(self, r):
        with pytest.raises(DomainError):
            bounds.required_T_upper(100, r)


class TestGrunewalder:
    def test_direct_value(self):
        expected = math.sqrt(2 / 100) * (2 * math.sqrt(math.log(200)) + 15)
        np.testing.assert_allclose(bounds.grunewalder_bound(1, 100, 1), expected, rtol=1e-14)
        np.testing.assert_allclose(bounds.grunewalder_bound(1, 100, 1), 2.77237, atol=1e-5)

    @given(st.integers(1, 6), st.integers(1, 10**9), st.floats(1e-3, 1e9))
    def test_sqrt_scaling(self, d, t, lk):
        np.testing.assert_allclose(bounds.grunewalder_bound(d, t, 4 * lk), 2 * bounds.grunewalder_bound(d, t, lk),
                                   rtol=1e-12)

    def test_fifth_root(self):
        assert bounds.integer_root(10**5, 5) == 10
        assert math.isfinite(bounds.grunewalder_bound(5, 10**5, 100.0))

    @given(st.integers(1, 10**30), st.integers(1, 12))
    def test_integer_root_exact(self, t, d):
        r = bounds.integer_root(t, d)
        assert r**d <= t < (r + 1) ** d


class TestThm2:
    def test_grid_sides_examples(self):
        assert bounds.thm2_grid_sides(1, 1, math.e**2) == 4
        assert bounds.thm2_grid_sides(2, 10**4, 100) == 2172

    def test_grid_sides_monotone(self):
        sides = [bounds.thm2_grid_sides(2, 10**4, lk) for lk in np.logspace(0.5, 8, 60)]
        assert all(b >= a for a, b in zip(sides, sides[1:]))

    def test_golden(self):
        np.testing.assert_allclose(bounds.thm2_continuous_bound(1, 10**5, 10**3, 1.0), 2.4850165442917813,
                                   rtol=1e-13)

    def test_independent_evaluation(self):
        d, t, lk, sigma = 1, 10**5, 1e3, 1.0
        s = math.ceil(lk / math.log(lk) * t)
        grid = math.sqrt(2 * math.log(lk) / t) * (2 * math.sqrt(math.log(2 * s**d)) + 15 * math.sqrt(d))
        finite = math.sqrt(2) * sigma * (math.sqrt(d * math.log(s)) - bounds.horizon_correction(t))
        np.testing.assert_allclose(bounds.thm2_continuous_bound(d, t, lk, sigma), grid + finite, rtol=1e-12)

    def test_term_decomposition_under_doubling(self):
        d, t, sigma, lk = 3, 10**6, 1.0, 50.0
        s1, s2 = bounds.thm2_grid_sides(d, t, lk), bounds.thm2_grid_sides(d, t, 2 * lk)
        b1, b2 = bounds.thm2_continuous_bound(d, t, lk, sigma), bounds.thm2_continuous_bound(d, t, 2 * lk, sigma)
        root = t ** (1 / d)

        def grid_part(lk_, s):
            return math.sqrt(2 * math.log(lk_) / root) * (2 * math.sqrt(math.log(2) + d * math.log(s)) + 15 * math.sqrt(d))

        finite_change = math.sqrt(2) * sigma * (math.sqrt(d * math.log(s2)) - math.sqrt(d * math.log(s1)))
        np.testing.assert_allclose(b2 - b1, grid_part(2 * lk, s2) - grid_part(lk, s1) + finite_change, rtol=1e-10)

    def test_non_increasing_in_t(self):
        for d in (1, 3, 5):
            vals = [bounds.thm2_continuous_bound(d, t, 1e4, 1.0) for t in sorted({max(500, round(x)) for x in np.logspace(math.log10(500), 12, 40)})]
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_huge_grid_does_not_overflow(self):
        assert math.isfinite(bounds.thm2_continuous_bound(10, 10**10, 1e12, 1.0))

    @pytest.mark.parametrize("kwargs", [dict(lipschitz=2.0), dict(horizon=100), dict(sigma_cap=0.0)])
    def test_guards(self, kwargs):
        args = dict(dim=1, horizon=10**5, lipschitz=1e3, sigma_cap=1.0)
        args.update(kwargs)
        with pytest.raises(DomainError):
            bounds.thm2_continuous_bound(**args)


class TestReport:
    def test_to_dict(self):
        r = bounds.report("cor1_normreg", N=2000, T=500)
        assert r.to_dict() == {"kind": "cor1_normreg", "inputs": {"N": 2000, "T": 500}, "value": r.value}

    def test_unknown(self):
        with pytest.raises(DomainError):
            bounds.report("nope", N=1, T=1)

    def test_applicable_bounds(self):
        kinds = [b.kind for b in bounds.applicable_bounds(2000, 500, zero_mean=True)]
        assert kinds == ["thm1_spread", "cor1_normreg", "lower_prior_independent"]
        kinds = [b.kind for b in bounds.applicable_bounds(100, 50, zero_mean=False)]
        assert kinds == ["lower_prior_independent"]
