import math

import numpy as np
import pytest
from pydantic import ValidationError

from stopdur.numerics import harmonic
from stopdur.process_model import simulate_policy
from stopdur.schemas import ProblemSpec, TransformedState
from stopdur.solvers import fullinfo, optimal_policy, randomhorizon, second_stop_rule
from stopdur.solvers.randomhorizon import PriorTail


class TestPriorTail:
    @pytest.mark.parametrize("pi", [[], [0.9, 0.5], [1.0, 0.5, 0.6], [1.0, 0.0]])
    def test_rejects_invalid_tails(self, pi):
        with pytest.raises(ValidationError):
            PriorTail(pi=pi)

    def test_truncated_geometric(self):
        p, n = 0.2, 8
        q = 1.0 - p
        tail = PriorTail.truncated_geometric(p, n)
        k = np.arange(1, n + 1)
        np.testing.assert_allclose(tail.array, (q ** (k - 1) - q**n) / (1.0 - q**n), atol=1e-15)
        assert tail.pi[0] == pytest.approx(1.0)

    def test_from_prior_matches_tail(self):
        prior = randomhorizon.truncated_geometric_prior(0.3, 12)
        assert sum(prior) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(
            PriorTail.from_prior(prior).array, PriorTail.truncated_geometric(0.3, 12).array, atol=1e-12
        )

    def test_survival(self):
        tail = PriorTail.from_prior([0.5, 0.25, 0.25])
        np.testing.assert_allclose(tail.array, [1.0, 0.5, 0.25])
        np.testing.assert_allclose(tail.survival(), [0.5, 0.5, 0.0])

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            PriorTail.truncated_geometric(1.0, 5)


class TestBoundedPrior:
    prior = PriorTail.truncated_geometric(0.1, 20)

    def test_last_stage_payoff(self):
        assert randomhorizon.rh_stop_payoff(self.prior, 20, 0.7) == pytest.approx(1.0 / 20, abs=1e-15)
        assert randomhorizon.rh_continue_payoff(self.prior, 20, 0.7) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            randomhorizon.rh_stop_payoff(self.prior, 3, 0.0)
        with pytest.raises(ValueError):
            randomhorizon.rh_stop_payoff(self.prior, 21, 0.5)
        with pytest.raises(ValueError):
            randomhorizon.rh_continue_payoff(self.prior, 3, 1.5)

    def test_continuation_vanishes_at_one(self):
        for k in (1, 7, 19):
            assert randomhorizon.rh_continue_payoff(self.prior, k, 1.0) == pytest.approx(0.0, abs=1e-15)
            assert randomhorizon.rh_continue_payoff(self.prior, k, 0.0) > 0.0

    def test_thresholds_balance_payoffs(self):
        seq = randomhorizon.rh_thresholds(self.prior)
        assert seq.index == "stage"
        assert seq.x[20] == 0.0
        inner = [k for k, a in seq.x.items() if 0.0 < a < 1.0]
        assert inner
        for k in inner:
            a = seq.x[k]
            stop = randomhorizon.rh_stop_payoff(self.prior, k, a, normalized=False)
            assert stop == pytest.approx(randomhorizon.rh_continue_payoff(self.prior, k, a, normalized=False), abs=1e-9)

    def test_unnormalized_scale(self):
        stop = randomhorizon.rh_stop_payoff(self.prior, 4, 0.5, normalized=False)
        assert randomhorizon.rh_stop_payoff(self.prior, 4, 0.5) == pytest.approx(stop / 20)


class TestFixedHorizonReduction:
    n = 15
    prior = PriorTail.fixed(15)

    def test_stop_payoff(self):
        for k in (1, 5, 15):
            for x in (0.1, 0.5, 0.95):
                expected = fullinfo.w_fidp(x, self.n - k + 1) / self.n
                assert randomhorizon.rh_stop_payoff(self.prior, k, x) == pytest.approx(expected, abs=1e-14)

    def test_thresholds(self):
        seq = randomhorizon.rh_thresholds(self.prior)
        for k in range(1, self.n + 1):
            assert seq.x[k] == pytest.approx(fullinfo.fidp_threshold(self.n - k + 1), abs=1e-9)

    def test_value(self):
        table = randomhorizon.rh_value(self.prior, grid_size=512)
        assert table.value == pytest.approx(fullinfo.fidp_value(self.n, grid_size=512).value, abs=1e-10)

    def test_stage_thresholds_order(self):
        table = randomhorizon.rh_value(self.prior, grid_size=512)
        cutoffs = randomhorizon.stage_thresholds(table)
        assert len(cutoffs) == self.n
        assert cutoffs[-1] == pytest.approx(0.0, abs=1e-12)
        for k, cut in enumerate(cutoffs, start=1):
            assert cut == pytest.approx(fullinfo.fidp_threshold(self.n - k + 1), abs=3.0 / 1024)


class TestGeometricHorizon:
    @pytest.mark.parametrize("k", [1, 3, 40])
    @pytest.mark.parametrize("x", [0.0, 0.4, 0.9])
    def test_memoryless_stop_payoff(self, k, x):
        p = 0.15
        value = randomhorizon.tail_stop_payoff(randomhorizon.geometric_tail(p), k, x)
        assert value == pytest.approx(randomhorizon.geometric_stop_payoff(p, x), abs=1e-12)

    def test_tail_domain(self):
        with pytest.raises(ValueError):
            randomhorizon.tail_stop_payoff(randomhorizon.geometric_tail(0.2), 1, 1.0)
        with pytest.raises(ValueError):
            randomhorizon.tail_stop_payoff(randomhorizon.geometric_tail(0.2), 0, 0.5)

    def test_stop_everywhere(self):
        sol = randomhorizon.geometric_unbounded(0.5)
        assert sol.stop_everywhere and sol.x0 == 0.0
        assert sol.value == pytest.approx(-2.0 * math.log(0.5), abs=1e-12)

    def test_boundary_probability(self):
        sol = randomhorizon.geometric_unbounded(math.exp(-1.0))
        assert sol.x0 == pytest.approx(0.0, abs=1e-12)
        below = randomhorizon.geometric_unbounded(math.exp(-1.0) - 1e-12)
        above = randomhorizon.geometric_unbounded(math.exp(-1.0) + 1e-12)
        assert above.stop_everywhere and not below.stop_everywhere
        assert below.value == pytest.approx(sol.value, abs=1e-9)
        assert above.value == pytest.approx(sol.value, abs=1e-9)
        assert below.x0 == pytest.approx(above.x0, abs=1e-9)

    @pytest.mark.parametrize("p", [0.1, 0.2])
    def test_truncated_prior_converges(self, p):
        prior = PriorTail.truncated_geometric(p, 300)
        for x in (0.2, 0.5, 0.9):
            stop = randomhorizon.rh_stop_payoff(prior, 1, x, normalized=False)
            assert stop == pytest.approx(randomhorizon.geometric_stop_payoff(p, x), abs=1e-8)
        x0 = randomhorizon.geometric_unbounded(p).x0
        for x in (x0, 0.9):
            cont = randomhorizon.rh_continue_payoff(prior, 1, x, normalized=False)
            assert cont == pytest.approx(randomhorizon.geometric_continuation(p, x), abs=1e-8)
        # stop and continue balance at the closed-form cutoff
        assert randomhorizon.rh_stop_payoff(prior, 1, x0, normalized=False) == pytest.approx(
            randomhorizon.rh_continue_payoff(prior, 1, x0, normalized=False), abs=1e-8
        )

    @pytest.mark.parametrize("p", [0.01, 0.05, 0.1, 0.2, 0.3])
    def test_closed_form(self, p):
        q = 1.0 - p
        sol = randomhorizon.geometric_unbounded(p)
        assert sol.x0 == pytest.approx((1.0 - math.e * p) / q, abs=1e-14)
        assert sol.value == pytest.approx(1.0 / (q * math.e * p), rel=1e-12)

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2, 0.3])
    def test_smooth_fit(self, p):
        x0 = randomhorizon.geometric_unbounded(p).x0
        stop = randomhorizon.geometric_stop_payoff(p, x0)
        assert randomhorizon.geometric_continuation(p, x0) == pytest.approx(stop, abs=1e-9)
        fitted = randomhorizon.geometric_smooth_fit_threshold(p, lambda x: randomhorizon.geometric_stop_payoff(p, x))
        assert fitted == pytest.approx(x0, abs=1e-8)

    def test_continuation_below_stop_above_threshold(self):
        p = 0.1
        x0 = randomhorizon.geometric_unbounded(p).x0
        for x in np.linspace(x0 + 0.01, 0.99, 7):
            assert randomhorizon.geometric_stop_payoff(p, x) >= randomhorizon.geometric_continuation(p, x)

    @pytest.mark.parametrize("p", [0.1, 0.6])
    def test_immediate_closing(self, p):
        q = 1.0 - p
        assert randomhorizon.geometric_alt_maturity_payoff(p, 0.0) == pytest.approx(q)
        ratio = randomhorizon.geometric_alt_maturity_payoff(p, 0.5) / randomhorizon.geometric_stop_payoff(p, 0.5)
        assert ratio == pytest.approx(q)
        base = randomhorizon.geometric_unbounded(p)
        alt = randomhorizon.geometric_alt_maturity(p)
        assert alt.x0 == base.x0
        assert alt.value == pytest.approx(q * base.value)

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            randomhorizon.geometric_unbounded(0.0)


class TestBestOrSecondFiniteHorizon:
    def test_printed_stop_payoff(self):
        assert randomhorizon.ka_U(1, 0.3) == pytest.approx(-1.0)
        assert randomhorizon.ka_U(2, 0.25) == pytest.approx(1.5)
        assert randomhorizon.ka_U(3, 0.5) == pytest.approx(2.25)

    def test_derived_stop_payoff(self):
        assert randomhorizon.ka_stop_payoff(1, 0.3) == pytest.approx(1.0)
        assert randomhorizon.ka_stop_payoff(2, 0.3) == pytest.approx(2.0)
        # status lasts while at most one later value is larger
        x, n = 0.6, 9
        m = np.arange(n)
        expected = float(np.sum(x**m + m * x ** np.maximum(m - 1, 0) * (1.0 - x)))
        assert randomhorizon.ka_stop_payoff(n, x) == pytest.approx(expected, abs=1e-12)

    def test_printed_gain(self):
        assert randomhorizon.ka_G(1, 0.4) == pytest.approx(-1.0)
        for n in range(1, 12):
            assert randomhorizon.ka_G(n, 1.0) == pytest.approx(n - 2.0, abs=1e-12)

    @pytest.mark.parametrize("n", range(2, 31))
    def test_conjecture_and_printed_gain_differ_by_top_term(self, n):
        for x in (0.0, 0.3, 0.8, 1.0):
            gap = randomhorizon.ka_conjecture_poly(n)(x) - randomhorizon.ka_G(n, x)
            assert gap == pytest.approx(2.0 * x ** (n - 1) * (1.0 + harmonic(n - 1)), abs=1e-9)

    @pytest.mark.parametrize("n", range(2, 31))
    def test_printed_gain_root(self, n):
        root = randomhorizon.ka_G_root(n)
        assert 0.0 <= root <= 1.0
        if 0.0 < root < 1.0:
            assert randomhorizon.ka_G(n, root) == pytest.approx(0.0, abs=1e-7)

    @pytest.mark.parametrize("n", range(1, 51))
    def test_printed_stopping_set_closed_upwards(self, n):
        xs = np.linspace(0.0, 1.0, 401)
        inside = randomhorizon.ka_G(n, xs) >= 0.0
        # once G is non-negative it stays so up to x = 1
        assert np.all(inside[np.argmax(inside):]) or not inside.any()
        if inside.any():
            assert xs[np.argmax(inside)] >= randomhorizon.ka_G_root(n) - 1e-12

    @pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
    def test_derived_one_step_gain(self, n):
        assert randomhorizon.ka_one_step_gain(n, 1.0) == pytest.approx(float(n), abs=1e-10)
        root = randomhorizon.ka_one_step_threshold(n)
        if 0.0 < root < 1.0:
            assert randomhorizon.ka_one_step_gain(n, root) == pytest.approx(0.0, abs=1e-8)

    def test_conjectured_thresholds(self):
        assert randomhorizon.ka_threshold(1) == 1.0
        roots = [randomhorizon.ka_threshold(n) for n in range(2, 101)]
        assert roots[:3] == [0.0, 0.0, 0.0]
        assert roots[3] > 0.0
        assert all(b >= a - 1e-12 for a, b in zip(roots, roots[1:]))
        assert all(r < 1.0 for r in roots)

    def test_small_horizons(self):
        assert randomhorizon.ka_value(1, grid_size=128).value == pytest.approx(1.0, abs=1e-12)
        assert randomhorizon.ka_value(2, grid_size=128).value == pytest.approx(2.0, abs=1e-12)

    def test_consistency_report(self):
        report = randomhorizon.ka_consistency_report(8, grid_size=256)
        assert list(report.columns) == ["n", "printed_gain_root", "conjecture_root", "one_step_root", "dp_threshold"]
        assert report["n"].tolist() == list(range(1, 9))
        assert report[["printed_gain_root", "conjecture_root", "dp_threshold"]].stack().between(0.0, 1.0).all()

    def test_rejects_empty_horizon(self):
        with pytest.raises(ValueError):
            randomhorizon.ka_U(0, 0.5)
        with pytest.raises(ValueError):
            randomhorizon.ka_value(0)


class TestBestOrSecondGeometric:
    def test_mu_star(self):
        mu = randomhorizon.mu_star()
        assert mu == pytest.approx(3.3145, abs=1e-4)
        assert 1.0 / mu == pytest.approx(0.3017046, abs=1e-6)
        assert mu**2 * math.exp(2.0 / mu) == pytest.approx(math.exp(3.0), rel=1e-10)

    def test_threshold_vanishes_at_inverse_mu(self):
        mu = randomhorizon.mu_star()
        threshold, _ = randomhorizon.ka_geometric(1.0 / mu)
        assert threshold == pytest.approx(0.0, abs=1e-12)
        assert randomhorizon.ka_geometric(0.5)[0] == 0.0

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
    def test_stop_equals_continue_at_threshold(self, p):
        x, _ = randomhorizon.ka_geometric(p)
        assert 0.0 < x < 1.0
        assert randomhorizon.ka_geometric_w(p, x) == pytest.approx(randomhorizon.ka_geometric_tw(p, x), abs=1e-8)

    def test_stop_payoff_at_zero_and_one(self):
        p = 0.1
        q = 1.0 - p
        assert randomhorizon.ka_geometric_tw(p, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert randomhorizon.ka_geometric_w(p, 1.0) == pytest.approx(2.0 * q / p - q / p)

    def test_payoffs_at_unit_state(self):
        for alpha in (0.5, 1.0, 9.0):
            w1, w2, tw = randomhorizon.best2_payoffs(TransformedState(s=1.0, t=1.0, alpha=alpha))
            assert (w1, w2) == (pytest.approx(alpha), pytest.approx(alpha))
            assert tw == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("p", [0.05, 0.2, 0.5])
    def test_transformed_payoff_matches_value_form(self, p):
        for x, y in [(0.3, 0.1), (0.8, 0.8), (0.95, 0.2)]:
            state = randomhorizon.transformed_state(p, x, y)
            w1, _, _ = randomhorizon.best2_payoffs(state)
            assert w1 == pytest.approx(randomhorizon.ka_geometric_w(p, x), rel=1e-12)

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2, 0.6])
    def test_reduction(self, p):
        assert randomhorizon.best2_reduction(p) == pytest.approx(randomhorizon.ka_geometric(p)[0], abs=1e-10)
        check = randomhorizon.best2_reduction_check(p, size=60)
        assert check["second_best_unreachable"]
        assert check["rank_one_boundary"]
        assert check["rank_one_minimal"]
        assert check["alpha_invariant"]
        assert check["closed_form_agrees"]

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
    def test_boundary_sits_at_inverse_mu(self, p):
        x = randomhorizon.best2_reduction(p)
        assert randomhorizon.transformed_state(p, x, 0.0).s == pytest.approx(1.0 / randomhorizon.mu_star(), abs=1e-10)

    def test_raised_threshold_is_not_minimal(self):
        check = randomhorizon.best2_reduction_check(0.1, size=60, threshold=0.8714)
        assert check["rank_one_boundary"]
        assert not check["rank_one_minimal"]
        assert not check["closed_form_agrees"]

    def test_lowered_threshold_misses_boundary(self):
        check = randomhorizon.best2_reduction_check(0.1, size=60, threshold=0.6)
        assert not check["rank_one_boundary"]
        assert check["rank_one_minimal"]

    def test_reduction_does_not_use_closed_form(self, monkeypatch):
        true_x = randomhorizon.ka_geometric(0.1)[0]
        monkeypatch.setattr(randomhorizon, "ka_geometric", lambda p: (0.8714, randomhorizon.mu_star()))
        assert randomhorizon.best2_reduction(0.1) == pytest.approx(true_x, abs=1e-10)
        assert not randomhorizon.best2_reduction_check(0.1, size=60)["closed_form_agrees"]

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
    def test_second_best_rule_silent_below_threshold(self, p):
        x_star = randomhorizon.best2_reduction(p)
        rule = randomhorizon.second_best_stop_rule(p)
        rng = np.random.default_rng(42)
        cur_max = x_star * rng.random(100_000)
        cur_max[:100] = x_star * (1.0 - 1e-9)
        second = cur_max * rng.random(cur_max.size)
        second[:50] = cur_max[:50]
        assert not rule(cur_max, second).any()

    def test_second_best_rule_fires_near_one(self):
        rule = randomhorizon.second_best_stop_rule(0.1)
        assert rule(np.array([0.999]), np.array([0.998])).all()


class TestRandomHorizonSimulation:
    def test_bounded_prior(self, within_std_errors):
        spec = ProblemSpec(model="rh-prior", prior=randomhorizon.truncated_geometric_prior(0.1, 20))
        policy, value = optimal_policy(spec)
        within_std_errors(simulate_policy(spec, policy, 300_000, seed=31), value)

    @pytest.mark.parametrize("maturity", ["standard", "immediate"])
    def test_geometric(self, maturity, within_std_errors):
        spec = ProblemSpec(model="rh-geometric", p=0.1, maturity=maturity)
        policy, value = optimal_policy(spec)
        within_std_errors(simulate_policy(spec, policy, 300_000, seed=37), value)

    def test_best_or_second_fixed_horizon(self, within_std_errors):
        spec = ProblemSpec(model="ka", n=20)
        policy, value = optimal_policy(spec)
        assert policy.label == randomhorizon.KA_LABEL
        within_std_errors(simulate_policy(spec, policy, 300_000, seed=41), value)

    def test_best_or_second_geometric(self, within_std_errors):
        spec = ProblemSpec(model="ka-geometric", p=0.1)
        policy, value = optimal_policy(spec)
        within_std_errors(simulate_policy(spec, policy, 300_000, seed=43), value)

    def test_second_best_stops_never_fire(self, within_std_errors):
        spec = ProblemSpec(model="best2-geometric", p=0.1)
        policy, value = optimal_policy(spec)
        rule = second_stop_rule(spec)
        assert rule is not None
        with_rule = simulate_policy(spec, policy, 200_000, seed=47, second_stop=rule)
        without = simulate_policy(spec, policy, 200_000, seed=47)
        assert with_rule.mean == without.mean
        within_std_errors(with_rule, value)
