#!/usr/bin/env python3
"""
Tests for the delay-equation integrator: noise-free accuracy against the
delay series, convergence order, physical bounds and input validation.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from analytic_solutions import series_amplitude_no_noise
from noise_paths import generate_path
from sdde_integrator import (AmplitudeTrajectory, delay_steps, integrate, integrate_batch, population_series,
                             write_trajectory_csv)
from sim_errors import AlignmentError, InvalidParameterError
from system_params import SystemParams

TAU = 1.0


def scenario(phi: float = 3.3, gamma_tau: float = 2.0, Gamma_tau: float = 0.5) -> SystemParams:
    return SystemParams.from_dimensionless(Gamma_tau=Gamma_tau, gamma_tau=gamma_tau, phi=phi, tau=TAU)


def max_series_error(p: SystemParams, dt: float, t_max: float = 3 * TAU) -> float:
    traj = integrate(p, None, dt, t_max=t_max)
    return float(np.max(np.abs(traj.values - series_amplitude_no_noise(traj.times, p))))


class TestNoiseFree:
    def test_no_coupling_keeps_amplitude(self):
        p = scenario(Gamma_tau=0.0)
        traj = integrate(p, None, 0.01)
        assert np.all(traj.values == 1.0)

    @pytest.mark.parametrize("phi", [0.0, 1.0, 3.3, math.pi])
    def test_matches_delay_series(self, phi):
        p = scenario(phi=phi, gamma_tau=0.0)
        traj = integrate(p, None, TAU / 2000)
        expected = series_amplitude_no_noise(traj.times, p)
        assert np.allclose(traj.values, expected, rtol=1e-3, atol=1e-6)

    def test_second_order_convergence(self):
        p = scenario(gamma_tau=0.0)
        coarse = max_series_error(p, TAU / 200)
        fine = max_series_error(p, TAU / 400)
        assert coarse / fine >= 1.9, f"errors {coarse} -> {fine}"

    def test_beyond_third_window(self):
        p = scenario(gamma_tau=0.0)
        traj = integrate(p, None, 0.001, t_max=4 * TAU)
        assert traj.n_steps == 4000
        assert np.allclose(traj.values, series_amplitude_no_noise(traj.times, p), rtol=1e-3, atol=1e-6)

    def test_without_feedback_is_free_decay(self):
        p = scenario()
        path = generate_path(seed=5, n_steps=3000, dt=0.001, gamma=p.gamma)
        traj = integrate(p, path, 0.001, feedback=False)
        expected = np.cumprod(np.exp(-p.Gamma * 0.001 + 1j * path.increments))
        assert np.allclose(traj.values[1:], expected, rtol=1e-12)
        assert np.allclose(population_series(traj), np.exp(-2 * p.Gamma * traj.times), rtol=1e-12)


class TestNoisyTrajectories:
    def setup_method(self):
        self.p = scenario()
        self.dt = 0.001
        self.path = generate_path(seed=9, n_steps=3000, dt=self.dt, gamma=self.p.gamma)

    def test_population_is_physical(self):
        traj = integrate(self.p, self.path, self.dt)
        assert np.all(population_series(traj) <= 1.0 + 1e-9)

    def test_first_window_decays_monotonically(self):
        populations = population_series(integrate(self.p, self.path, self.dt))
        d = delay_steps(self.p, self.dt)
        assert np.all(np.diff(populations[:d + 1]) < 0)
        assert populations[d] == pytest.approx(math.exp(-2 * self.p.Gamma * TAU), rel=1e-12)

    def test_linear_in_initial_amplitude(self):
        rotation = complex(math.cos(0.7), math.sin(0.7))
        base = integrate(self.p, self.path, self.dt)
        rotated = integrate(self.p, self.path, self.dt, p0=0.5 * rotation)
        assert np.allclose(rotated.values, 0.5 * rotation * base.values, rtol=1e-12, atol=1e-15)

    def test_full_turn_of_phase_is_identical(self):
        shifted = scenario(phi=3.3 + 2 * math.pi)
        assert np.array_equal(integrate(self.p, self.path, self.dt).values,
                              integrate(shifted, self.path, self.dt).values)

    def test_noise_strength_comes_from_path(self):
        a = integrate(self.p, self.path, self.dt)
        b = integrate(self.p.with_gamma(0.0), self.path, self.dt)
        assert np.array_equal(a.values, b.values)

    def test_batch_rows_and_populations(self):
        other = generate_path(seed=10, n_steps=3000, dt=self.dt, gamma=self.p.gamma)
        increments = np.vstack([self.path.increments, other.increments])
        amplitudes = integrate_batch(self.p, increments, self.dt)
        populations = integrate_batch(self.p, increments, self.dt, populations_only=True)
        assert amplitudes.shape == populations.shape == (2, 3001)
        assert np.allclose(amplitudes[0], integrate(self.p, self.path, self.dt).values, rtol=1e-13, atol=1e-15)
        assert np.allclose(populations, np.abs(amplitudes) ** 2, rtol=1e-12)

    def test_longer_path_is_truncated(self):
        traj = integrate(self.p, self.path, self.dt, t_max=2 * TAU)
        assert traj.n_steps == 2000
        assert np.array_equal(traj.values, integrate(self.p, self.path, self.dt).values[:2001])


class TestValidation:
    def test_delay_not_multiple_of_step(self):
        with pytest.raises(AlignmentError):
            integrate(scenario(), None, 0.3)

    def test_step_larger_than_delay(self):
        with pytest.raises(AlignmentError):
            delay_steps(scenario(), 2.0)

    def test_initial_amplitude_above_one(self):
        with pytest.raises(InvalidParameterError):
            integrate(scenario(), None, 0.01, p0=1.5)

    def test_path_grid_mismatch(self):
        path = generate_path(seed=1, n_steps=150, dt=0.02, gamma=1.0)
        with pytest.raises(AlignmentError):
            integrate(scenario(), path, 0.01)

    def test_path_too_short(self):
        path = generate_path(seed=1, n_steps=100, dt=0.01, gamma=1.0)
        with pytest.raises(AlignmentError):
            integrate(scenario(), path, 0.01)

    def test_trajectory_values_read_only(self):
        traj = integrate(scenario(), None, 0.01)
        assert isinstance(traj, AmplitudeTrajectory)
        with pytest.raises(ValueError):
            traj.values[0] = 0.0


class TestTrajectoryCsv:
    def test_dump(self, tmp_path):
        traj = integrate(scenario(), None, 0.5, t_max=1.5)
        target = tmp_path / "trajectory.csv"
        rows = write_trajectory_csv(traj, str(target), comments=["path: none"])
        lines = target.read_text().splitlines()
        assert rows == 4
        assert lines[0] == "# path: none"
        assert lines[1] == "step_index,time,re_amplitude,im_amplitude,population"
        assert lines[2] == "0,0,1,0,1"
        assert len(lines) == 6
