import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopdur.numerics import ein
from stopdur.process_model import simulate_policy
from stopdur.schemas import ProblemSpec, ThresholdPolicy
from stopdur.solvers import fullinfo


class TestStopPayoff:
    def test_examples(self):
        assert fullinfo.w_fidp(0.3, 1) == pytest.approx(1.0, abs=1e-15)
        assert fullinfo.w_fidp(1.0, 7) == 7.0
        assert fullinfo.w_fidp(0.5, 3) == pytest.approx(1.75, abs=1e-15)
        assert fullinfo.w_fidp(0.0, 4) == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=0.0, max_value=1.0), st.integers(min_value=1, max_value=400))
    def test_power_sum(self, x, s):
        expected = float(np.sum(x ** np.arange(s)))
        assert fullinfo.w_fidp(x, s) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_array_input(self):
        out = fullinfo.w_fidp(np.array([0.0, 0.5, 1.0]), 2)
        np.testing.assert_allclose(out, [1.0, 1.5, 2.0])

    def test_domain(self):
        with pytest.raises(ValueError):
            fullinfo.w_fidp(0.5, 0)
        with pytest.raises(ValueError):
            fullinfo.w_fidp(1.5, 2)


class TestGrid:
    def test_unit_grid(self):
        grid = fullinfo.unit_grid(64)
        assert grid[0] == 0.0 and grid[-1] == 1.0
        assert np.all(np.diff(grid) > 0)
        # cells shrink towards 1
        assert np.diff(grid)[-1] < np.diff(grid)[0]

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            fullinfo.unit_grid(32)

    def test_integrate_max_splits_at_crossing(self):
        grid = np.linspace(0.0, 1.0, 11)
        stop = grid.copy()
        cont = np.full_like(grid, 0.55)
        tail, threshold = fullinfo.integrate_max(grid, stop, 0.5 * (1.0 - grid**2), cont)
        assert threshold == pytest.approx(0.55, abs=1e-11)
        # int_0^1 max(y, 0.55) dy = 0.55^2 + (1 - 0.55^2)/2
        assert tail[0] == pytest.approx(0.55**2 + 0.5 * (1.0 - 0.55**2), abs=1e-12)
        assert tail[-1] == 0.0

    def test_crossing_of_curved_payoff(self):
        grid = np.linspace(0.0, 1.0, 11)
        stop = grid**2
        cont = np.full_like(grid, 0.3)
        _, threshold = fullinfo.integrate_max(grid, stop, (1.0 - grid**3) / 3.0, cont)
        assert threshold == pytest.approx(math.sqrt(0.3), abs=1e-10)
        # the chord through the bracketing nodes misses by about 2e-3
        assert abs(threshold - (0.5 + 0.05 / 0.11 * 0.1)) > 1e-3

    def test_cell_crossing_at_node(self):
        grid = np.linspace(0.0, 1.0, 6)
        diff = grid - 0.6
        assert fullinfo.cell_crossing(grid, diff, 2) == pytest.approx(0.6, abs=1e-11)
        assert fullinfo.cell_crossing(grid, grid - 0.4, 1) == 0.4

    def test_integrate_max_never_stops(self):
        grid = np.linspace(0.0, 1.0, 5)
        _, threshold = fullinfo.integrate_max(grid, np.zeros(5), np.zeros(5), np.ones(5))
        assert threshold == 1.0


class TestFidpValue:
    def test_one_stage(self):
        table = fullinfo.fidp_value(1, grid_size=128)
        np.testing.assert_allclose(table.values[1], 1.0 - table.grid, atol=1e-12)
        assert table.value == pytest.approx(1.0, abs=1e-12)

    def test_two_stages(self):
        # v(x, 2) = x (1 - x) + int_x^1 (1 + y) dy, and 1 + y >= 1 - y everywhere
        table = fullinfo.fidp_value(2, grid_size=256)
        x = table.grid
        expected = x * (1.0 - x) + (1.0 - x) + 0.5 * (1.0 - x**2)
        np.testing.assert_allclose(table.values[2], expected, atol=1e-10)
        assert table.value == pytest.approx(0.75, abs=1e-10)

    def test_grid_refinement(self):
        coarse = fullinfo.fidp_value(100, grid_size=1024).value
        fine = fullinfo.fidp_value(100, grid_size=2048).value
        assert abs(coarse - fine) < 1e-6

    def test_values_decrease_in_x(self):
        table = fullinfo.fidp_value(30, grid_size=512)
        for s in range(1, 31):
            assert np.all(np.diff(table.values[s]) <= 1e-9)

    @pytest.mark.parametrize("n", [10, 40])
    def test_crossing_matches_threshold(self, n):
        table = fullinfo.fidp_value(n, grid_size=1024)
        cell = 3.0 / 2048
        for s in range(1, n + 1):
            assert table.thresholds[s - 1] == pytest.approx(fullinfo.fidp_threshold(s), abs=cell)

    def test_threshold_sequence(self):
        seq = fullinfo.fidp_value(12, grid_size=256).threshold_sequence()
        assert seq.index == "stages_to_go"
        assert sorted(seq.x) == list(range(1, 13))
        assert seq.x[1] == 0.0

    def test_limit_consistency(self):
        assert fullinfo.fidp_value(2000).value == pytest.approx(0.435171, abs=2e-3)

    def test_rejects_empty_horizon(self):
        with pytest.raises(ValueError):
            fullinfo.fidp_value(0)

    @pytest.mark.parametrize("n", [3, 20])
    def test_simulation(self, n, within_std_errors):
        value = fullinfo.fidp_value(n).value
        policy = ThresholdPolicy(value_thresholds=fullinfo.stage_cutoffs(fullinfo.fidp_threshold, n))
        report = simulate_policy(ProblemSpec(model="fidp", n=n), policy, 300_000, seed=n)
        within_std_errors(report, value)


class TestThresholds:
    def test_first_stages(self):
        assert fullinfo.fidp_threshold(1) == 0.0
        assert fullinfo.fidp_threshold(2) == 0.0
        assert 0.0 < fullinfo.fidp_threshold(3) < 1.0

    def test_one_step_equation(self):
        # stopping with 3 to go: 1 + x + x^2 equals (1 + x)(1 - x) + (1 - x^2)/2
        x = fullinfo.fidp_threshold(3)
        assert 1.0 + x + x * x == pytest.approx((1.0 + x) * (1.0 - x) + 0.5 * (1.0 - x * x), abs=1e-10)

    def test_monotone(self):
        xs = [fullinfo.fidp_threshold(s) for s in range(1, 201)]
        assert all(b >= a - 1e-12 for a, b in zip(xs, xs[1:]))

    def test_asymptote(self):
        s = 10_000
        assert s * (1.0 - fullinfo.fidp_threshold(s)) == pytest.approx(2.1198, abs=1e-2)

    def test_recall_thresholds(self):
        assert fullinfo.fidp_recall_threshold(1) == 0.0
        assert fullinfo.fidp_recall_threshold(2) == 0.0
        xs = [fullinfo.fidp_recall_threshold(s) for s in range(1, 201)]
        assert all(b >= a - 1e-12 for a, b in zip(xs, xs[1:]))
        s = 10_000
        assert s * (1.0 - fullinfo.fidp_recall_threshold(s)) == pytest.approx(1.345, abs=1e-2)

    def test_bcdp_thresholds(self):
        assert fullinfo.bcdp_threshold(1) == 0.0
        assert fullinfo.bcdp_threshold(2) == pytest.approx(0.5, abs=1e-12)
        assert fullinfo.bcdp_threshold(3) == pytest.approx((1.0 + math.sqrt(13.0)) / 6.0, abs=1e-12)
        xs = [fullinfo.bcdp_threshold(s) for s in range(2, 101)]
        assert all(b > a for a, b in zip(xs, xs[1:]))
        assert xs[-1] > 0.98

    def test_stage_cutoffs_reverse_stages(self):
        cutoffs = fullinfo.stage_cutoffs(fullinfo.bcdp_threshold, 4)
        assert cutoffs == [fullinfo.bcdp_threshold(s) for s in (4, 3, 2, 1)]

    def test_threshold_sequence(self):
        seq = fullinfo.threshold_sequence(fullinfo.fidp_recall_threshold, 5)
        assert seq.x[2] == 0.0


class TestRecallValue:
    def test_one_stage(self):
        value, _ = fullinfo.fidp_recall_value(1, grid_size=128)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_recall_helps(self):
        n = 25
        value, _ = fullinfo.fidp_recall_value(n)
        assert value >= fullinfo.fidp_value(n).value - 1e-9

    def test_simulation(self, within_std_errors):
        n = 20
        value, _ = fullinfo.fidp_recall_value(n)
        policy = ThresholdPolicy(value_thresholds=fullinfo.stage_cutoffs(fullinfo.fidp_recall_threshold, n))
        report = simulate_policy(ProblemSpec(model="fidp-recall", n=n), policy, 300_000, seed=13)
        within_std_errors(report, value)


class TestBcdp:
    def test_one_stage(self):
        assert fullinfo.bcdp_value(1, grid_size=128).value == pytest.approx(1.0, abs=1e-12)

    def test_crossing_matches_threshold(self):
        n = 20
        table = fullinfo.bcdp_value(n, grid_size=1024)
        for s in range(1, n + 1):
            assert table.thresholds[s - 1] == pytest.approx(fullinfo.bcdp_threshold(s), abs=3.0 / 2048)

    def test_simulation(self, within_std_errors):
        n = 20
        value = fullinfo.bcdp_value(n).value
        policy = ThresholdPolicy(value_thresholds=fullinfo.stage_cutoffs(fullinfo.bcdp_threshold, n))
        report = simulate_policy(ProblemSpec(model="bcdp", n=n), policy, 300_000, seed=17)
        within_std_errors(report, value)


class TestLimitConstants:
    def test_asymptotic_z(self):
        z = fullinfo.asymptotic_z()
        assert z == pytest.approx(2.1198, abs=1e-3)
        # 1 - Ein(t) changes sign inside (1, z)
        assert ein(1.0) < 1.0 < ein(z)

    def test_recall_z(self):
        z = fullinfo.asymptotic_recall_z()
        assert ein(z) == pytest.approx(1.0, abs=1e-10)
        assert z == pytest.approx(1.345, abs=1e-2)

    def test_fidp_limit_constant(self):
        assert fullinfo.fidp_limit_constant() == pytest.approx(0.435171, abs=1e-3)

    def test_bcdp_limits(self):
        c = fullinfo.bcdp_limit_c()
        assert math.exp(c) == pytest.approx(1.0 + 2.0 * c, abs=1e-10)
        assert c == pytest.approx(1.2564, abs=1e-3)
        assert fullinfo.bcdp_limit_value() == pytest.approx(0.31096, abs=1e-4)
        assert fullinfo.bcdp_recall_limit_value() == pytest.approx(0.33536, abs=1e-4)
