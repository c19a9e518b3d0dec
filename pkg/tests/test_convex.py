import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from thermoform.convex import (RateFunctionHandle, cylinder_family, entropy_approximation_sequence,
                               grid_conjugate_oracle, l_eval, l_grad, q_star, rate_at)
from thermoform.measures import (MarkovMeasure, bernoulli, cylinder_probabilities, entropy_rate, mix,
                                 moments, periodic_orbit_measure)
from thermoform.potential import ObservableFamily, Potential
from thermoform.pressure import equilibrium_state, pressure_spectral, variational_gap
from thermoform.shift import admissible_words, full_shift, golden_mean

from conftest import random_primitive_sft


def coin_rate(x):
    """Closed-form conjugate of log((1 + e^t) / 2)."""
    out = math.log(2)
    for p in (x, 1 - x):
        if p > 0:
            out += p * math.log(p)
    return out


@pytest.fixture
def coin_handle(coin):
    return RateFunctionHandle(coin, Potential.zero(coin),
                              ObservableFamily([Potential.indicator(coin, "1")]))


def random_instance(rng, d):
    space = random_primitive_sft(rng, int(rng.integers(2, 4)))
    f = Potential.random(space, int(rng.integers(1, 4)), rng)
    S = ObservableFamily([Potential.random(space, int(rng.integers(1, 3)), rng) for _ in range(d)])
    return space, f, S


class TestQStar:
    def test_zero_at_equilibrium(self, golden, rng):
        f = Potential.random(golden, 3, rng)
        assert abs(q_star(golden, f, equilibrium_state(golden, f))) < 1e-8

    def test_biased_coin(self, coin):
        assert q_star(coin, Potential.zero(coin), bernoulli(coin, [.25, .75])) == pytest.approx(0.130812, abs=1e-6)

    def test_dirac(self, coin):
        assert q_star(coin, Potential.zero(coin), periodic_orbit_measure(coin, "0")) == pytest.approx(math.log(2), abs=1e-12)

    def test_iff_variational_gap_vanishes(self, golden, rng):
        f = Potential.random(golden, 2, rng)
        eq = equilibrium_state(golden, f)
        Q = eq.Q.copy()
        Q[0] = [0.5, 0.5] if abs(Q[0, 0] - 0.5) > 0.1 else [0.9, 0.1]
        other = MarkovMeasure(golden, eq.order, Q)
        for mu, zero in ((eq, True), (other, False)):
            qs, vg = q_star(golden, f, mu), variational_gap(golden, f, mu)
            assert (abs(qs) < 1e-8) == (abs(vg) < 1e-8) == zero


class TestLogMomentGenerating:
    def test_closed_forms(self, coin_handle):
        assert l_eval(coin_handle, [0.0]) == 0.0
        assert l_eval(coin_handle, [math.log(3)]) == pytest.approx(math.log(2), abs=1e-12)
        assert l_eval(coin_handle, [1.0]) == pytest.approx(math.log((1 + math.e) / 2), abs=1e-12)
        assert l_eval(coin_handle, [1.0]) == pytest.approx(0.620114, abs=1e-6)

    def test_gradient_examples(self, coin_handle):
        assert l_grad(coin_handle, [0.0])[0] == pytest.approx(0.5, abs=1e-14)
        assert l_grad(coin_handle, [math.log(3)])[0] == pytest.approx(0.75, abs=1e-12)

    def test_zero_exactly(self, rng):
        space, f, S = random_instance(rng, 2)
        assert l_eval(RateFunctionHandle(space, f, S), np.zeros(2)) == 0.0

    def test_gradient_finite_differences(self, rng):
        h = 1e-5
        for _ in range(20):
            d = int(rng.integers(1, 4))
            space, f, S = random_instance(rng, d)
            H = RateFunctionHandle(space, f, S)
            t = rng.uniform(-1, 1, d)
            fd = np.array([(l_eval(H, t + h * e) - l_eval(H, t - h * e)) / (2 * h) for e in np.eye(d)])
            assert np.abs(l_grad(H, t) - fd).max() < 1e-6

    def test_hessian_finite_differences(self, rng):
        h = 1e-5
        for _ in range(8):
            d = int(rng.integers(1, 4))
            space, f, S = random_instance(rng, d)
            H = RateFunctionHandle(space, f, S)
            t = rng.uniform(-1, 1, d)
            fd = np.array([(H.gradient(t + h * e) - H.gradient(t - h * e)) / (2 * h) for e in np.eye(d)])
            np.testing.assert_allclose(H.hessian(t), fd, atol=1e-6)

    def test_convex_on_segments(self, rng):
        space, f, S = random_instance(rng, 2)
        H = RateFunctionHandle(space, f, S)
        for _ in range(20):
            a, b = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
            assert l_eval(H, (a + b) / 2) <= 0.5 * l_eval(H, a) + 0.5 * l_eval(H, b) + 1e-10

    def test_gradient_is_equilibrium_moments(self, golden, rng):
        f = Potential.random(golden, 2, rng)
        S = ObservableFamily([Potential.random(golden, 3, rng), Potential.indicator(golden, "0")])
        H = RateFunctionHandle(golden, f, S)
        t = np.array([0.7, -0.4])
        mu = equilibrium_state(golden, f + S.combine(t))
        np.testing.assert_allclose(l_grad(H, t), moments(mu, S), atol=1e-12)


class TestRate:
    def test_at_equilibrium_moment(self, rng):
        space, f, S = random_instance(rng, 2)
        H = RateFunctionHandle(space, f, S)
        res = rate_at(H, l_grad(H, np.zeros(2)))
        assert res.converged and abs(res.value) < 1e-12
        np.testing.assert_allclose(res.t, 0.0, atol=1e-9)

    def test_closed_form(self, coin_handle):
        res = rate_at(coin_handle, [0.9])
        assert res.value == pytest.approx(coin_rate(0.9), abs=1e-9)
        assert res.value == pytest.approx(0.3680642071684972, abs=1e-12)
        assert res.t[0] == pytest.approx(math.log(9), abs=1e-6)

    def test_fenchel_grid(self, coin_handle):
        xs = np.round(np.arange(0.05, 0.951, 0.05), 2)
        assert max(abs(rate_at(coin_handle, [x]).value - coin_rate(x)) for x in xs) < 1e-6

    def test_outside_range(self, coin_handle):
        for x in (1.2, -0.01):
            res = rate_at(coin_handle, [x])
            assert res.infinite and res.value == math.inf

    def test_range_endpoints_finite(self, coin_handle):
        for x in (0.0, 1.0):
            res = rate_at(coin_handle, [x])
            assert not res.infinite
            assert res.value == pytest.approx(math.log(2), abs=1e-8)

    def test_witness_contract(self, rng):
        for _ in range(5):
            space, f, S = random_instance(rng, 2)
            H = RateFunctionHandle(space, f, S)
            x = l_grad(H, rng.uniform(-2, 2, 2))
            res = rate_at(H, x)
            assert res.converged
            assert np.abs(moments(res.witness, S) - x).max() < 1e-7
            assert abs(q_star(space, f, res.witness) - res.value) < 1e-7

    def test_young_equality(self, rng):
        space, f, S = random_instance(rng, 2)
        H = RateFunctionHandle(space, f, S)
        for _ in range(5):
            t = rng.uniform(-2, 2, 2)
            g = l_grad(H, t)
            assert abs(rate_at(H, g).value + l_eval(H, t) - t @ g) < 1e-7

    def test_nonnegative_and_midpoint_convex(self, rng):
        space, f, S = random_instance(rng, 1)
        H = RateFunctionHandle(space, f, S)
        vals = S.values()[0]
        xs = np.arange(vals.min() + 0.05, vals.max() - 0.05, 0.05)
        I = [rate_at(H, [x]).value for x in xs]
        assert min(I) >= -1e-9
        mids = [rate_at(H, [(a + b) / 2]).value for a, b in zip(xs[:-2], xs[2:])]
        for m, a, b in zip(mids, I[:-2], I[2:]):
            assert m <= 0.5 * a + 0.5 * b + 1e-7

    def test_coboundary_directions(self, golden):
        # 1_[01] - 1_[10] is a coboundary on the golden mean, so the moment
        # range lies on the diagonal and the dual is flat off it
        S = ObservableFamily([Potential.indicator(golden, "01"), Potential.indicator(golden, "10")])
        H = RateFunctionHandle(golden, Potential.zero(golden), S)
        on = rate_at(H, [0.3, 0.3])
        off = rate_at(H, [0.3, 0.2])
        assert on.converged and not on.infinite and on.value > 0
        assert off.infinite
        single = RateFunctionHandle(golden, Potential.zero(golden), ObservableFamily([S.potentials[0]]))
        assert on.value == pytest.approx(rate_at(single, [0.3]).value, abs=1e-9)

    def test_cache_bit_identical(self, coin_handle):
        a = rate_at(coin_handle, [0.37])
        b = rate_at(coin_handle, [0.37])
        assert a is b

    def test_concurrent_calls(self, golden, rng):
        f = Potential.random(golden, 2, rng)
        S = ObservableFamily([Potential.indicator(golden, "0")])
        xs = [[0.5 + 0.01 * (i % 7)] for i in range(40)]
        serial = [RateFunctionHandle(golden, f, S).rate_at(x).value for x in xs]
        H = RateFunctionHandle(golden, f, S)
        with ThreadPoolExecutor(8) as pool:
            par = list(pool.map(lambda x: H.rate_at(x).value, xs))
        assert par == serial


class TestGridOracle:
    T = np.arange(-12, 12 + 1e-9, 1e-3)

    def test_zero_function(self):
        t = np.linspace(-50, 50, 1001)
        res = grid_conjugate_oracle(t, np.zeros_like(t), [0.0, 0.5, -1.0])
        assert res.values[0] == 0.0
        assert res.values[1] >= 25 and res.values[2] >= 50

    def test_coin_conjugate(self):
        L = np.log((1 + np.exp(self.T)) / 2)
        res = grid_conjugate_oracle(self.T, L, [0.5, 0.9])
        assert abs(res.values[0]) < 1e-6
        assert res.values[1] == pytest.approx(coin_rate(0.9), abs=1e-5)
        assert res.values[1] <= coin_rate(0.9) + 1e-12
        assert (res.gap_bound >= coin_rate(0.9) - res.values[1]).all()

    def test_matches_rate_on_random_instances(self, rng):
        # the maximiser is t = 0.8, well inside the grid
        t = np.arange(-3, 3 + 1e-9, 2e-3)
        for _ in range(3):
            space, f, S = random_instance(rng, 1)
            H = RateFunctionHandle(space, f, S)
            # the grid samples L through an independent spectral computation
            P0 = pressure_spectral(space, f).value
            L = np.array([pressure_spectral(space, f + S.combine([s])).value - P0 for s in t])
            x = float(l_grad(H, [0.8])[0])
            grid = grid_conjugate_oracle(t, L, [x]).values[0]
            assert abs(rate_at(H, [x]).value - grid) < 1e-4


class TestCylinderFamily:
    def test_coin_one(self, coin):
        S = cylinder_family(coin, 1)
        assert S.d == 1 and S.potentials[0]("0") == 1.0 and S.potentials[0]("1") == 0.0

    def test_golden_two(self, golden):
        S = cylinder_family(golden, 2)
        assert S.d == 2
        assert [g("00") for g in S] == [1.0, 0.0] and [g("01") for g in S] == [0.0, 1.0]

    def test_coin_two(self, coin):
        assert cylinder_family(coin, 2).d == 3


class TestEntropyApproximation:
    def test_fixed_point(self, golden, rng):
        f = Potential.random(golden, 2, rng)
        target = equilibrium_state(golden, f)
        for step in entropy_approximation_sequence(golden, f, target, 5):
            assert step.converged and not step.perturbed
            assert step.moment_error < 1e-9 and abs(step.entropy_gap) < 1e-9

    def test_coin_mixture(self, coin):
        target = mix([(0.5, bernoulli(coin, [.5, .5])), (0.5, periodic_orbit_measure(coin, "0"))])
        assert entropy_rate(target) == pytest.approx(0.5 * math.log(2), abs=1e-15)
        steps = entropy_approximation_sequence(coin, Potential.zero(coin), target, 8)
        gaps = [s.entropy_gap for s in steps]
        assert all(s.converged and s.moment_error < 1e-6 for s in steps)
        assert all(g > 0 for g in gaps)
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.05

    def test_golden_mixture_two_cylinders(self, golden):
        parry = equilibrium_state(golden, Potential.zero(golden))
        target = mix([(0.5, parry), (0.5, periodic_orbit_measure(golden, "0"))])
        assert entropy_rate(target) == pytest.approx(0.240606, abs=1e-6)
        words = admissible_words(golden, 2)
        want = cylinder_probabilities(target, words)
        for step in entropy_approximation_sequence(golden, Potential.zero(golden), target, 6):
            assert np.abs(cylinder_probabilities(step.measure, words) - want).max() < 1e-6

    def test_boundary_target_perturbed(self, golden):
        target = periodic_orbit_measure(golden, "001")
        steps = entropy_approximation_sequence(golden, Potential.zero(golden), target, 4)
        assert steps[-1].perturbed and steps[-1].converged
        assert steps[-1].target_moment_error < 1e-5
        assert steps[-1].moment_error < 1e-6

    def test_measures_are_equilibrium_states(self, golden):
        target = mix([(0.3, periodic_orbit_measure(golden, "01")), (0.7, periodic_orbit_measure(golden, "0"))])
        f = Potential.zero(golden)
        for step in entropy_approximation_sequence(golden, f, target, 4):
            g = f + cylinder_family(golden, step.n).combine(step.t)
            again = equilibrium_state(golden, g)
            np.testing.assert_allclose(again.Q, step.measure.Q, atol=1e-12)
