import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from driftcal.conformal import (
    PredictionInterval,
    ScoreWindow,
    TargetLevel,
    compute_beta,
    empirical_quantile,
    interval_from_quantile,
    pinball_loss,
    pinball_subgradient,
    set_membership,
)

windows = st.lists(
    st.floats(min_value=-100.0, max_value=100.0, allow_nan=False),
    min_size=1,
    max_size=50,
)


class TestTargetLevel:
    def test_open_interval(self):
        TargetLevel(0.1)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError, match="target level"):
                TargetLevel(bad)


class TestEmpiricalQuantile:
    def test_conventions_override_contents(self):
        assert empirical_quantile(1.0, [1.0, 2.0]) == math.inf
        assert empirical_quantile(1.5, [1.0]) == math.inf
        assert empirical_quantile(0.0, [1.0, 2.0]) == -math.inf
        assert empirical_quantile(-0.3, [1.0]) == -math.inf
        # even for an empty window
        assert empirical_quantile(1.0, []) == math.inf
        assert empirical_quantile(0.0, []) == -math.inf

    def test_empty_window_has_no_finite_quantile(self):
        with pytest.raises(ValueError, match="empty"):
            empirical_quantile(0.5, [])

    def test_order_statistic_examples(self):
        assert empirical_quantile(0.5, [1.0, 2.0, 3.0, 4.0]) == 2.0
        assert empirical_quantile(0.9, [5.0]) == 5.0
        assert empirical_quantile(0.25, [3.0, 1.0, 2.0, 4.0]) == 1.0
        assert empirical_quantile(0.26, [3.0, 1.0, 2.0, 4.0]) == 2.0

    @given(windows, st.floats(min_value=1e-6, max_value=1.0 - 1e-6))
    def test_matches_sort_oracle(self, xs, tau):
        assert empirical_quantile(tau, xs) == oracles.quantile_by_sort(tau, xs)

    @given(windows, st.floats(min_value=1e-6, max_value=1.0 - 1e-6))
    def test_rank_guarantee(self, xs, tau):
        q = empirical_quantile(tau, xs)
        assert q in xs
        assert sum(1 for x in xs if x <= q) >= math.ceil(tau * len(xs))

    def test_scorewindow_and_sequence_agree(self):
        xs = [3.0, 1.0, 4.0, 1.0, 5.0]
        win = ScoreWindow(10, xs)
        for tau in (0.1, 0.3, 0.5, 0.7, 0.99):
            assert empirical_quantile(tau, win) == empirical_quantile(tau, xs)


class TestComputeBeta:
    def test_fraction_at_or_above(self):
        assert compute_beta(2.5, [1.0, 2.0, 3.0, 4.0]) == 0.5
        assert compute_beta(2.0, [1.0, 2.0, 2.0, 3.0]) == 0.75
        assert compute_beta(0.5, [1.0, 2.0, 3.0, 4.0]) == 1.0
        assert compute_beta(9.0, [1.0, 2.0, 3.0, 4.0]) == 0.0

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            compute_beta(1.0, [])

    def test_grid_oracle_examples(self):
        # frozen from the step-1e-4 sweep: the sup sits one grid notch
        # below the exact rank value
        assert oracles.beta_by_grid(2.5, [1.0, 2.0, 3.0, 4.0]) == pytest.approx(0.4999, abs=1e-12)
        assert oracles.beta_by_grid(2.0, [1.0, 2.0, 2.0, 3.0]) == pytest.approx(0.7499, abs=1e-12)
        assert abs(compute_beta(2.5, [1.0, 2.0, 3.0, 4.0]) - 0.4999) <= 1e-4
        assert abs(compute_beta(2.0, [1.0, 2.0, 2.0, 3.0]) - 0.7499) <= 1e-4

    @given(
        st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=12),
        st.integers(min_value=-6, max_value=6),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_grid_oracle(self, xs, probe):
        xs = [float(x) for x in xs]
        assert abs(compute_beta(float(probe), xs) - oracles.beta_by_grid(float(probe), xs)) <= 1e-4


class TestSetMembership:
    def test_examples(self):
        win = [1.0, 2.0, 3.0, 4.0]
        assert set_membership(2.5, 0.3, win)
        assert not set_membership(3.5, 0.3, win)
        # boundary conventions
        assert set_membership(100.0, 0.0, win)
        assert set_membership(100.0, -1.0, win)
        assert not set_membership(-100.0, 1.0, win)

    @given(
        windows,
        st.floats(min_value=-100.0, max_value=100.0, allow_nan=False),
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_monotone_in_alpha(self, xs, s, a1, a2):
        lo, hi = sorted((a1, a2))
        if set_membership(s, lo, xs) is False:
            assert set_membership(s, hi, xs) is False

    @given(
        windows,
        st.floats(min_value=-100.0, max_value=100.0, allow_nan=False),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_boundary_link(self, xs, s, alpha):
        # away from the grid j/n, membership at alpha and beta sit on the
        # same side: member  <=>  alpha < beta
        n = len(xs)
        if any(abs(alpha * n - j) < 1e-9 for j in range(n + 1)):
            return
        member = set_membership(s, alpha, xs)
        beta = compute_beta(s, xs)
        assert member == (alpha < beta)


class TestScoreWindow:
    def test_capacity_validation(self):
        with pytest.raises(ValueError, match="capacity"):
            ScoreWindow(0)

    def test_eviction_is_fifo(self):
        win = ScoreWindow(3, [1.0, 2.0, 3.0])
        win.push(4.0)
        assert list(win) == [2.0, 3.0, 4.0]
        assert win.is_full
        assert len(win) == 3

    def test_order_statistics_track_sorted_contents(self):
        win = ScoreWindow(4, [5.0, 1.0, 3.0, 3.0])
        assert [win.order_statistic(k) for k in (1, 2, 3, 4)] == [1.0, 3.0, 3.0, 5.0]
        with pytest.raises(IndexError):
            win.order_statistic(0)
        with pytest.raises(IndexError):
            win.order_statistic(5)

    def test_count_geq_includes_ties(self):
        win = ScoreWindow(4, [1.0, 2.0, 2.0, 3.0])
        assert win.count_geq(2.0) == 3
        assert win.count_geq(2.1) == 1
        assert win.count_geq(0.0) == 4

    def test_rejects_non_finite(self):
        win = ScoreWindow(2)
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError, match="finite"):
                win.push(bad)

    def test_rank_queries_survive_rolling(self):
        rng = np.random.default_rng(42)
        xs = rng.normal(size=300)
        win = ScoreWindow(50)
        for i, x in enumerate(xs):
            win.push(x)
            if i >= 60 and i % 17 == 0:
                live = xs[i - 49 : i + 1]
                assert win.count_geq(0.0) == int((live >= 0.0).sum())
                assert win.order_statistic(25) == float(np.sort(live)[24])


class TestIntervalFromQuantile:
    def test_absolute(self):
        assert interval_from_quantile(2.0, 0.5, "absolute") == PredictionInterval(1.5, 2.5)
        iv = interval_from_quantile(2.0, math.inf, "absolute")
        assert iv.lo == -math.inf and iv.hi == math.inf

    def test_normalized(self):
        assert interval_from_quantile(2.0, 0.5, "normalized") == PredictionInterval(1.0, 3.0)
        with pytest.raises(ValueError, match="positive point"):
            interval_from_quantile(-2.0, 0.5, "normalized")
        with pytest.raises(ValueError, match="positive point"):
            interval_from_quantile(0.0, 0.5, "normalized")

    def test_relative_worked_example(self):
        # point 4, reference 2, threshold 0.5: candidates c with
        # |4 - c| <= 0.5 |2 - c| form [10/3, 6]
        iv = interval_from_quantile(4.0, 0.5, "relative", aux=2.0)
        assert iv.lo == pytest.approx(10.0 / 3.0, rel=1e-15)
        assert iv.hi == pytest.approx(6.0, rel=1e-15)
        grid = oracles.relative_interval_by_grid(4.0, 0.5, 2.0)
        assert iv.lo == pytest.approx(grid[0], abs=1e-4)
        assert iv.hi == pytest.approx(grid[1], abs=1e-4)

    @given(
        st.floats(min_value=-5.0, max_value=5.0),
        st.floats(min_value=0.01, max_value=0.95),
        st.floats(min_value=-5.0, max_value=5.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_relative_matches_sweep(self, point, q, aux):
        # interval width is 2 q |point - aux| / (1 - q^2); keep it well above
        # the sweep resolution or the grid may miss it entirely
        assume(q * abs(point - aux) >= 0.01)
        iv = interval_from_quantile(point, q, "relative", aux=aux)
        grid = oracles.relative_interval_by_grid(point, q, aux)
        assert grid is not None
        step = 100.0 / 2_000_000
        assert iv.lo == pytest.approx(grid[0], abs=2 * step)
        assert iv.hi == pytest.approx(grid[1], abs=2 * step)

    def test_relative_guards(self):
        with pytest.raises(ValueError, match="auxiliary"):
            interval_from_quantile(4.0, 0.5, "relative")
        with pytest.raises(ValueError, match="unbounded relative set"):
            interval_from_quantile(4.0, 1.0, "relative", aux=2.0)
        with pytest.raises(ValueError, match="unbounded relative set"):
            interval_from_quantile(4.0, math.inf, "relative", aux=2.0)

    def test_negative_quantile_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            interval_from_quantile(2.0, -0.1, "absolute")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown score kind"):
            interval_from_quantile(2.0, 0.5, "studentized")

    def test_width(self):
        assert PredictionInterval(1.0, 3.5).width == 2.5


class TestPinball:
    def test_loss_examples(self):
        assert pinball_loss(0.5, 0.2, 0.1) == pytest.approx(0.03)
        assert pinball_loss(0.2, 0.5, 0.1) == pytest.approx(0.27)
        assert pinball_loss(0.3, 0.3, 0.1) == 0.0

    def test_subgradient_examples(self):
        assert pinball_subgradient(0.5, 0.2, 0.1) == -0.1
        assert pinball_subgradient(0.2, 0.5, 0.1) == 0.9
        # boundary takes the flat piece
        assert pinball_subgradient(0.3, 0.3, 0.1) == -0.1

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_nonnegative_and_zero_on_diagonal(self, beta, theta, alpha):
        val = pinball_loss(beta, theta, alpha)
        assert val >= 0.0
        if abs(beta - theta) > 1e-12:
            assert val > 0.0
        assert pinball_loss(beta, beta, alpha) == 0.0

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_matches_exact_rational(self, beta, theta, alpha):
        from fractions import Fraction

        exact = oracles.pinball_exact(Fraction(beta), Fraction(theta), Fraction(alpha))
        assert pinball_loss(beta, theta, alpha) == pytest.approx(float(exact), abs=1e-15)
