"""Stick-breaking measure tests: weight maps, marginals, evolution, ACF."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmix import measure
from diffmix.errors import NumericalError
from diffmix.measure import (MeasureState, StickConfig, evolve, measure_eval,
                             sample_marginal, sticks_to_weights,
                             theoretical_acf, weights_to_sticks)


@pytest.fixture
def rng():
    return np.random.default_rng(77)


class TestWeightMaps:
    def test_simple_example(self):
        w = sticks_to_weights(np.array([0.5, 0.5]))
        np.testing.assert_allclose(w, [0.5, 0.25])
        assert 1.0 - w.sum() == pytest.approx(0.25)

    def test_degenerate_first_stick(self):
        w = sticks_to_weights(np.array([1 - 1e-12, 0.5, 0.5]))
        assert w[0] == pytest.approx(1.0, abs=1e-11)
        assert np.all(w[1:] < 1e-11)

    def test_identity_sum(self, rng):
        v = rng.uniform(0.01, 0.99, size=50)
        w = sticks_to_weights(v)
        assert w.sum() + np.prod(1 - v) == pytest.approx(1.0, abs=1e-14)

    def test_inverse_example(self):
        v = weights_to_sticks(np.array([0.5, 0.25]))
        np.testing.assert_allclose(v, [0.5, 0.5])

    def test_single_full_weight_boundary(self):
        v = weights_to_sticks(np.array([1.0]))
        assert v[0] == pytest.approx(1.0)

    def test_degeneracy_error(self):
        with pytest.raises(NumericalError):
            weights_to_sticks(np.array([0.7, 0.3, 0.05]))

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.floats(min_value=0.01, max_value=0.5), min_size=1,
                    max_size=10))
    def test_round_trip(self, values):
        # recovery of stick j conditions on the remaining mass at j, so
        # the strategy keeps the remainder well above machine precision
        v = np.array(values)
        back = weights_to_sticks(sticks_to_weights(v))
        assert np.max(np.abs(back - v)) < 1e-12

    def test_round_trip_fifty_dp_sticks(self, rng):
        # a 50-deep truncation is the many-small-sticks regime
        for _ in range(25):
            v = np.clip(rng.beta(1.0, 8.0, size=50), 1e-6, 0.95)
            back = weights_to_sticks(sticks_to_weights(v))
            assert np.max(np.abs(back - v)) < 1e-12

    def test_exhausted_remainder_raises(self, rng):
        # fifty heavy sticks push the remainder below resolution
        v = rng.uniform(0.5, 0.95, size=60)
        w = sticks_to_weights(v)
        with pytest.raises(NumericalError):
            weights_to_sticks(w)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            sticks_to_weights(np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            weights_to_sticks(np.array([-0.1, 0.5]))


class TestStickConfig:
    def test_dp_defaults_to_standard_rate(self):
        cfg = StickConfig.dp(3.0)
        assert cfg.c == pytest.approx(1.5)
        p = cfg.stick_params(5)
        assert (p.a, p.b) == (1.0, 3.0)

    def test_dp_invalid(self):
        with pytest.raises(ValueError):
            StickConfig.dp(0.0)

    def test_pitman_yor_params(self):
        cfg = StickConfig.pitman_yor(1.0, 0.25, c=2.0)
        p3 = cfg.stick_params(3)
        assert p3.a == pytest.approx(0.75)
        assert p3.b == pytest.approx(1.75)

    def test_pitman_yor_validation(self):
        with pytest.raises(ValueError):
            StickConfig.pitman_yor(1.0, 1.0)
        # theta <= 0 breaks a_1 + b_1 > 1 even though theta > -sigma
        with pytest.raises(ValueError):
            StickConfig.pitman_yor(-0.1, 0.5)

    def test_gem_validation_and_tail_repeat(self):
        cfg = StickConfig.general_gem([(1.0, 2.0), (1.5, 1.0)], c=1.0)
        assert cfg.stick_params(10).a == pytest.approx(1.5)
        with pytest.raises(ValueError):
            StickConfig.general_gem([(0.5, 0.4)])

    def test_gem_convergence_warning(self):
        with pytest.warns(UserWarning):
            StickConfig.general_gem([(1.0, 1.0), (1.0, 10.0), (1.0, 100.0)])

    def test_gem_constant_prefix_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            StickConfig.general_gem([(1.0, 2.0), (1.0, 2.0)])


class TestSampleMarginal:
    def test_deficit_below_tolerance(self, rng):
        cfg = StickConfig.dp(1.0)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-3, rng)
        assert state.deficit(0) < 1e-3

    def test_expected_stick_count(self, rng):
        # stopping count: first passage of an Exp(theta) random walk over
        # log(1/tol); Wald gives E[count] = theta log(1/tol) + 1
        theta, tol = 1.0, 0.01
        cfg = StickConfig.dp(theta)
        reps = 4000
        counts = np.array([
            sample_marginal(cfg, lambda r, n: r.uniform(size=n), tol, rng).m
            for _ in range(reps)])
        expected = theta * np.log(1.0 / tol) + 1.0
        se = counts.std(ddof=1) / np.sqrt(reps)
        assert abs(counts.mean() - expected) < 3 * se

    def test_first_weight_mean(self, rng):
        theta = 2.0
        cfg = StickConfig.dp(theta)
        reps = 4000
        w1 = np.array([
            sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-3, rng)
            .weights(0)[0]
            for _ in range(reps)])
        se = w1.std(ddof=1) / np.sqrt(reps)
        assert abs(w1.mean() - 1.0 / (1.0 + theta)) < 3 * se

    def test_small_theta_single_atom(self, rng):
        cfg = StickConfig.dp(0.05)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-3, rng)
        assert state.weights(0)[0] > 0.5  # typically close to 1


class TestEvolve:
    def test_atoms_fixed_times_shift(self, rng):
        cfg = StickConfig.dp(1.0)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-4, rng)
        out = evolve(state, cfg, 0.7, rng)
        assert out.times[0] == pytest.approx(0.7)
        np.testing.assert_array_equal(out.atoms, state.atoms)
        assert out.m == state.m

    def test_large_dt_decorrelates(self, rng):
        cfg = StickConfig.dp(1.0)
        before = []
        after = []
        for _ in range(2000):
            state = sample_marginal(cfg, lambda r, n: r.uniform(size=n),
                                    1e-3, rng)
            out = evolve(state, cfg, 50.0, rng)
            before.append(state.sticks[0, 0])
            after.append(out.sticks[0, 0])
        r = np.corrcoef(before, after)[0, 1]
        assert abs(r) < 3.0 / np.sqrt(2000)

    def test_small_dt_total_variation_shrinks(self, rng):
        cfg = StickConfig.dp(1.0)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-4, rng)
        tv = []
        for dt in (1.0, 0.1, 0.01):
            moved = evolve(state, cfg, dt, rng)
            tv.append(0.5 * np.abs(moved.weights(0) - state.weights(0)).sum())
        assert tv[0] > tv[2]
        assert tv[2] < 0.1

    def test_stationarity_of_moments(self, rng):
        # after evolving, P_t(A) keeps the Dirichlet mean and variance
        theta = 1.0
        cfg = StickConfig.dp(theta)
        reps = 3000
        vals = np.empty(reps)
        for i in range(reps):
            state = sample_marginal(cfg, lambda r, n: r.uniform(size=n),
                                    1e-4, rng)
            state = evolve(state, cfg, 0.8, rng)
            vals[i] = measure_eval(state, 0, lambda x: x < 0.5).value
        se_mean = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean() - 0.5) < 3 * se_mean
        s2 = vals.var(ddof=1)
        m4 = np.mean((vals - vals.mean()) ** 4)
        se_var = np.sqrt(max(m4 - s2 ** 2, 0) / reps)
        assert abs(s2 - 0.125) < 3 * se_var


class TestMeasureEval:
    def test_whole_space_and_empty(self, rng):
        cfg = StickConfig.dp(1.0)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-4, rng)
        full = measure_eval(state, 0, lambda x: np.ones(len(x), dtype=bool))
        assert full.value == pytest.approx(1.0 - full.deficit, abs=1e-12)
        empty = measure_eval(state, 0, lambda x: np.zeros(len(x), dtype=bool))
        assert empty.value == 0.0

    def test_bad_predicate_shape(self, rng):
        cfg = StickConfig.dp(1.0)
        state = sample_marginal(cfg, lambda r, n: r.uniform(size=n), 1e-4, rng)
        with pytest.raises(ValueError):
            measure_eval(state, 0, lambda x: np.ones(1, dtype=bool))


class TestTheoreticalAcf:
    def test_lag_zero_is_one(self):
        for theta in (0.3, 1.0, 5.0):
            assert theoretical_acf(theta, 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_long_lag_floor(self):
        assert theoretical_acf(1.0, 1e9) == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_series_form_matches_closed_form(self):
        # two independent implementations of the same function
        theta, s = 1.0, 2.0
        via_series = (1.0 + theta) * measure.expected_weight_overlap(theta, s)
        assert via_series == pytest.approx(theoretical_acf(theta, s),
                                           abs=1e-14)

    def test_monotone_decreasing(self):
        lags = np.linspace(0, 10, 50)
        vals = theoretical_acf(2.0, lags)
        assert np.all(np.diff(vals) < 0)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            theoretical_acf(0.0, 1.0)
        with pytest.raises(ValueError):
            theoretical_acf(1.0, -0.5)


class TestMeasureState:
    def test_validation(self):
        with pytest.raises(ValueError):
            MeasureState(times=[0.0, 0.0], sticks=np.full((1, 2), 0.5),
                         atoms=np.zeros(1))
        with pytest.raises(ValueError):
            MeasureState(times=[0.0], sticks=np.array([[1.0]]),
                         atoms=np.zeros(1))
        with pytest.raises(ValueError):
            MeasureState(times=[0.0], sticks=np.full((2, 1), 0.5),
                         atoms=np.zeros(3))
