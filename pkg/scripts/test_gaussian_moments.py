#!/usr/bin/env python3
"""
Tests for the Gaussian phase-factor averages and the quadrature moments,
cross-checked against closed forms and per-path Monte Carlo.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from gaussian_moments import (MOMENT_NAMES, QuadratureSettings, Segment, mean_N, moment_M, moment_MMstar,
                              moment_NNstar, moment_NstarM, monte_carlo_moments, noise_moments, path_functionals,
                              phase_moment, segment_overlap)
from noise_paths import generate_path
from sim_errors import AlignmentError, DomainError, InvalidParameterError, QuadratureError
from system_params import SystemParams

TAU = 1.0
FAST = QuadratureSettings(base_nodes_low=128, base_nodes_high=32, max_refinements=3)


def params(gamma_tau: float) -> SystemParams:
    return SystemParams(Gamma=0.5, tau=TAU, phi=0.0, gamma=gamma_tau / TAU)


def nn_closed_form(t: float, gamma: float) -> float:
    T = t - TAU
    return 2.0 * (gamma * T + math.exp(-gamma * T) - 1.0) / gamma ** 2


class TestSegmentOverlap:
    @pytest.mark.parametrize("s1,s2,expected", [
        ((0, 1), (2, 3), 0.0),
        ((0, 2), (1, 3), 1.0),
        ((0, 1), (0, 1), 1.0),
        ((0, 1), (1, 2), 0.0),
    ])
    def test_examples(self, s1, s2, expected):
        a, b = Segment(*s1), Segment(*s2)
        assert segment_overlap(a, b) == expected
        assert segment_overlap(b, a) == expected

    def test_bounded_by_shorter_segment(self):
        a, b = Segment(0.0, 5.0), Segment(1.0, 1.5)
        assert segment_overlap(a, b) == pytest.approx(min(a.length, b.length))

    def test_invalid_segments(self):
        with pytest.raises(InvalidParameterError):
            Segment(2.0, 1.0)
        with pytest.raises(InvalidParameterError):
            Segment(0.0, 1.0, sign=0)


class TestPhaseMoment:
    def test_single_window(self):
        assert phase_moment([Segment(0.3, 0.3 + TAU)], 1.7) == pytest.approx(math.exp(-1.7 * TAU / 2))

    def test_cancelling_pair(self):
        assert phase_moment([Segment(0.0, TAU, 1), Segment(0.0, TAU, -1)], 3.0) == 1.0

    @pytest.mark.parametrize("delta", [0.1, 0.5, 0.9])
    def test_shifted_opposite_windows(self, delta):
        t1, t2 = 2.0, 2.0 - delta
        value = phase_moment([Segment(t1 - TAU, t1, 1), Segment(t2 - TAU, t2, -1)], 1.3)
        assert value == pytest.approx(math.exp(-1.3 * delta))

    def test_range_and_symmetries(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            segments = []
            for _ in range(4):
                a = float(rng.uniform(0, 3))
                segments.append(Segment(a, a + float(rng.uniform(0, 1)), int(rng.choice([-1, 1]))))
            value = phase_moment(segments, 2.0)
            assert 0.0 < value <= 1.0
            assert phase_moment(segments[::-1], 2.0) == pytest.approx(value, rel=1e-12)
            flipped = [Segment(s.a, s.b, -s.sign) for s in segments]
            assert phase_moment(flipped, 2.0) == pytest.approx(value, rel=1e-12)

    def test_empty_and_noiseless(self):
        assert phase_moment([], 1.0) == 1.0
        assert phase_moment([Segment(0.0, 1.0)], 0.0) == 1.0

    def test_negative_gamma(self):
        with pytest.raises(InvalidParameterError):
            phase_moment([Segment(0.0, 1.0)], -1.0)


class TestMeanN:
    def test_noiseless(self):
        assert mean_N(2.5, params(0.0)) == pytest.approx(1.5)

    def test_at_delay(self):
        assert mean_N(TAU, params(1.0)) == 0.0

    def test_closed_form(self):
        assert mean_N(2.0, params(1.0)).real == pytest.approx(TAU * math.exp(-0.5))

    def test_before_delay(self):
        with pytest.raises(DomainError):
            mean_N(0.5, params(1.0))


class TestQuadratureMoments:
    @pytest.mark.parametrize("t", [2.0, 2.4, 3.0])
    def test_noiseless_limits(self, t):
        p = params(0.0)
        assert moment_M(t, p, FAST).real == pytest.approx((t - 2 * TAU) ** 2 / 2, rel=1e-10)
        assert moment_NNstar(t, p, FAST) == pytest.approx((t - TAU) ** 2, rel=1e-10)
        assert moment_NstarM(t, p, FAST).real == pytest.approx((t - TAU) * (t - 2 * TAU) ** 2 / 2, rel=1e-10)
        assert moment_MMstar(t, p, FAST) == pytest.approx(((t - 2 * TAU) ** 2 / 2) ** 2, rel=1e-10)

    @pytest.mark.parametrize("t", [1.3, 1.8, 2.0])
    def test_nn_closed_form_in_second_window(self, t):
        assert moment_NNstar(t, params(2.0)) == pytest.approx(nn_closed_form(t, 2.0), rel=1e-5)

    def test_m_closed_form(self):
        # the two windows of M never overlap
        t = 2.7
        expected = math.exp(-1.5) * (t - 2 * TAU) ** 2 / 2
        assert moment_M(t, params(1.5)).real == pytest.approx(expected, rel=1e-5)

    def test_thresholds(self):
        p = params(1.0)
        assert moment_NNstar(TAU, p) == 0.0
        assert moment_NNstar(0.5, p) == 0.0
        assert moment_M(2 * TAU, p) == 0
        assert moment_NstarM(1.5, p) == 0
        assert moment_MMstar(2 * TAU, p) == 0.0

    def test_imaginary_parts_vanish(self):
        assert moment_M(2.5, params(1.0), FAST).imag == 0.0
        assert moment_NstarM(2.5, params(1.0), FAST).imag == 0.0

    def test_beyond_third_window(self):
        with pytest.raises(DomainError):
            moment_MMstar(3.5, params(1.0))

    def test_cauchy_schwarz(self):
        p = params(1.0)
        for t in (1.5, 2.5, 3.0):
            moments = noise_moments(t, p, FAST)
            assert moments.NNstar >= moments.mean_N ** 2
            assert moments.MMstar >= moments.M ** 2

    def test_continuity_at_two_tau(self):
        p = params(1.0)
        below = noise_moments(2.0, p, FAST)
        above = noise_moments(2.0 + 1e-6, p, FAST)
        assert above.NNstar == pytest.approx(below.NNstar, rel=1e-4)
        assert abs(above.M) < 1e-10
        assert abs(above.NstarM) < 1e-10

    def test_refinement_failure_carries_residual(self):
        strict = QuadratureSettings(rtol=1e-15, atol=0.0, base_nodes_low=4, max_refinements=1)
        with pytest.raises(QuadratureError) as info:
            moment_NNstar(1.6, params(3.0), strict)
        assert info.value.residual > 0.0
        assert info.value.level == 1

    def test_invalid_settings(self):
        with pytest.raises(InvalidParameterError):
            QuadratureSettings(max_refinements=0)

    def test_noise_moments_below_delay(self):
        moments = noise_moments(0.5, params(1.0))
        assert moments.as_dict() == {"t": 0.5, "mean_N": 0.0, "NNstar": 0.0, "M": 0.0, "NstarM": 0.0,
                                     "MMstar": 0.0}


class TestPathFunctionals:
    def test_noiseless_values(self):
        dt = 0.01
        path = generate_path(seed=1, n_steps=300, dt=dt, gamma=0.0)
        N, M = path_functionals(path.cumulative, dt, 2.5, TAU)
        assert N[0].real == pytest.approx(1.5, rel=1e-12)
        assert M[0].real == pytest.approx(0.125, rel=1e-12)
        assert N[0].imag == 0.0

    def test_below_thresholds(self):
        path = generate_path(seed=1, n_steps=300, dt=0.01, gamma=1.0)
        N, M = path_functionals(path.cumulative, 0.01, 1.0, TAU)
        assert N[0] == 0 and M[0] == 0
        N, M = path_functionals(path.cumulative, 0.01, 1.7, TAU)
        assert N[0] != 0 and M[0] == 0

    def test_time_beyond_path(self):
        path = generate_path(seed=1, n_steps=100, dt=0.01, gamma=1.0)
        with pytest.raises(AlignmentError):
            path_functionals(path.cumulative, 0.01, 2.0, TAU)


class TestMonteCarloAgreement:
    def test_quadrature_matches_paths(self):
        p = params(1.0)
        t = 3.0 * TAU
        quadrature = noise_moments(t, p).as_dict()
        estimates = monte_carlo_moments(t, p, n_paths=4000, master_seed=2024, dt=0.01)
        assert set(estimates) == set(MOMENT_NAMES)
        for name in MOMENT_NAMES:
            est = estimates[name]
            assert est.deviation(quadrature[name]) < 4.0, (
                f"{name}: quadrature {quadrature[name]} vs Monte Carlo {est.value} ± {est.stderr}")

    def test_too_few_paths(self):
        with pytest.raises(InvalidParameterError):
            monte_carlo_moments(2.0, params(1.0), n_paths=1, master_seed=0, dt=0.01)
