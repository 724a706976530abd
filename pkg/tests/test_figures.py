"""Figure tables: anchors, monotone curves and the crossover sweep."""

import math

import numpy as np
import pytest

from gpfewshot import bounds, figures
from gpfewshot.errors import DomainError


class TestFigure1:
    def test_anchor_row(self):
        rows = figures.figure1_rows()
        (value,) = [b for n, t, b in rows if n == 10**20 and t == 10**6]
        assert abs(value - 0.572) <= 0.001

    def test_curves_monotone_and_in_range(self):
        rows = figures.figure1_rows()
        for n in figures.FIG1_DOMAINS:
            curve = [(t, b) for nn, t, b in rows if nn == n]
            assert curve[0][0] == 500 and curve[-1][0] == n
            vals = [b for _, b in curve]
            assert all(0 < v < 1 for v in vals)
            assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_log_integers(self):
        xs = figures.log_integers(500, 10**5, 10)
        assert xs[0] == 500 and xs[-1] == 10**5
        assert xs == sorted(set(xs))


class TestFigure2:
    def test_columns(self):
        rows = figures.figure2_rows()
        assert len(rows) == len(figures.FIG2_DOMAINS) * len(figures.FIG2_TARGETS)
        for n, r, t_bis, t_env in rows:
            if not math.isnan(t_bis):
                assert 500 <= t_bis <= n
                assert bounds.thm1_regret_bound(n, int(t_bis)) <= r
            assert 1.0 <= t_env <= n

    def test_unreachable_targets_are_nan(self):
        rows = figures.figure2_rows(domains=(1000,), targets=(0.1,))
        assert math.isnan(rows[0][2])

    def test_required_horizon_grows_with_domain(self):
        rows = figures.figure2_rows()
        for r in figures.FIG2_TARGETS:
            col = [t for _, rr, t, _ in rows if rr == r and not math.isnan(t)]
            assert all(b >= a for a, b in zip(col, col[1:]))


class TestFigure3:
    def test_tables(self):
        tables = figures.figure_tables(3)
        assert set(tables) == {"figure3_D", "figure3_T"}
        assert tables["figure3_D"][0] == ("variant", "D", "L_k", "value")
        assert tables["figure3_T"][0] == ("variant", "T", "L_k", "value")

    def test_short_horizons_have_grunewalder_only(self):
        rows = figures.figure3_rows()["T"]
        assert {v for v, t, _, _ in rows if t < 500} == {"grunewalder"}
        assert {v for v, t, _, _ in rows if t >= 500} == {"grunewalder", "thm2"}

    def test_crossover(self):
        cross = figures.crossover_analysis(dim=5)
        assert cross["sign_changes"] <= 1
        assert cross["below_from"] is not None and cross["gap_increasing"]
        np.testing.assert_array_equal(cross["gap"] > 0, cross["lipschitz"] >= cross["below_from"])


class TestFigureTables:
    @pytest.mark.parametrize("fig,names", [(1, {"figure1"}), ("2", {"figure2"})])
    def test_names(self, fig, names):
        assert set(figures.figure_tables(fig)) == names

    @pytest.mark.parametrize("bad", [0, 4, "x", None])
    def test_unknown(self, bad):
        with pytest.raises(DomainError):
            figures.figure_tables(bad)
