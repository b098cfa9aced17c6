"""
Integrator for the feedback delay equation with multiplicative phase noise

    dP/dt = (iF_t - Γ) P + Γ e^{-iφ} P(t - τ) θ(t - τ)

One step advances the local part by the exact factor E_k = e^{-Γdt + iΔW_k} and
adds the delayed part as Γe^{-iφ}·dt times the mean of P(t_k - τ) and
P(t_k + dt - τ), weighted by the half-step factor e^{-Γdt/2 + iΔW_k/2}:

    traj = integrate(params, path, dt=1e-3)
    population_series(traj)
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from csv_output import write_csv
from noise_paths import NoisePath, grid_index
from sim_errors import AlignmentError, InvalidParameterError
from system_params import SystemParams

logger = logging.getLogger(__name__)

PHYSICAL_BOUND = 1.0 + 1e-9


@dataclass(frozen=True, eq=False)
class AmplitudeTrajectory:
    """Complex amplitude on the grid t_k = k·dt; values[0] is the initial condition"""
    dt: float
    values: np.ndarray
    params: SystemParams

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if peak > PHYSICAL_BOUND:
            logger.warning(f"Trajectory amplitude reaches {peak:.12g} > 1; dt={self.dt} is too coarse")

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt


def delay_steps(p: SystemParams, dt: float) -> int:
    """d = τ/dt; dt must divide τ"""
    d = grid_index(p.tau, dt, "tau")
    if d < 1:
        raise AlignmentError(f"dt={dt} is larger than the delay τ={p.tau}")
    return d


def _check_p0(p0: complex) -> complex:
    p0 = complex(p0)
    if not (math.isfinite(p0.real) and math.isfinite(p0.imag)) or abs(p0) > 1.0 + 1e-12:
        raise InvalidParameterError(f"|p0| must be <= 1, got {abs(p0)}")
    return p0


def integrate_batch(p: SystemParams, increments: np.ndarray, dt: float, p0: complex = 1.0,
                    feedback: bool = True, populations_only: bool = False) -> np.ndarray:
    """
    Integrate several noise realizations at once.

    Args:
        p: scenario parameters
        increments: phase increments ΔW_k, one row per realization
        dt: grid step, must divide τ
        p0: initial amplitude, |p0| <= 1
        feedback: False drops the delayed term
        populations_only: return |P|² instead of P

    Returns: array of shape (rows, n_steps + 1), complex amplitudes or real populations
    """
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    p0 = _check_p0(p0)
    d = delay_steps(p, dt)
    n_paths, n_steps = increments.shape

    local = np.exp(complex(-p.Gamma * dt) + 1j * increments)
    half = np.exp(complex(-0.5 * p.Gamma * dt) + 0.5j * increments)
    coupling = 0.5 * dt * p.Gamma * complex(math.cos(p.phi), -math.sin(p.phi)) if feedback else 0j

    out = np.empty((n_paths, n_steps + 1), dtype=float if populations_only else complex)
    # ring[:, j % (d + 1)] holds P_j for the last d + 1 steps
    ring = np.empty((n_paths, d + 1), dtype=complex)
    ring[:, 0] = p0
    out[:, 0] = abs(p0) ** 2 if populations_only else p0
    for k in range(n_steps):
        current = ring[:, k % (d + 1)]
        nxt = local[:, k] * current
        if k >= d and coupling != 0:
            delayed = ring[:, (k - d) % (d + 1)] + ring[:, (k + 1 - d) % (d + 1)]
            nxt = nxt + coupling * half[:, k] * delayed
        ring[:, (k + 1) % (d + 1)] = nxt
        out[:, k + 1] = nxt.real ** 2 + nxt.imag ** 2 if populations_only else nxt
    return out


def integrate(p: SystemParams, path: Optional[NoisePath], dt: float, t_max: Optional[float] = None,
              p0: complex = 1.0, feedback: bool = True) -> AmplitudeTrajectory:
    """
    Integrate one realization up to t_max (default 3τ).

    Args:
        p: scenario parameters; p.gamma is not used, the noise comes from `path`
        path: noise realization on the same grid, or None for the noise-free equation
        dt: grid step, must divide τ
        t_max: grid-aligned horizon; may exceed 3τ
        p0: initial amplitude
        feedback: False drops the delayed term

    Raises:
        AlignmentError: dt does not divide τ, t_max off-grid, or the path grid differs
        InvalidParameterError: |p0| > 1
    """
    delay_steps(p, dt)
    t_max = 3.0 * p.tau if t_max is None else t_max
    n_steps = grid_index(t_max, dt, "t_max")
    if n_steps < 1:
        raise InvalidParameterError(f"t_max must be at least one step, got {t_max}")
    if path is None:
        increments = np.zeros(n_steps)
    else:
        if not math.isclose(path.dt, dt, rel_tol=1e-12):
            raise AlignmentError(f"path grid dt={path.dt} differs from integrator dt={dt}")
        if path.n_steps < n_steps:
            raise AlignmentError(f"path has {path.n_steps} steps, {n_steps} needed for t_max={t_max}")
        increments = path.increments[:n_steps]
    values = integrate_batch(p, increments[None, :], dt, p0=p0, feedback=feedback)[0]
    return AmplitudeTrajectory(dt=dt, values=values, params=p)


def population_series(traj: AmplitudeTrajectory) -> np.ndarray:
    """|P_k|² at every grid point"""
    return traj.values.real ** 2 + traj.values.imag ** 2


def write_trajectory_csv(traj: AmplitudeTrajectory, destination: Optional[str], comments: Sequence[str] = (),
                         timestamp: bool = False) -> int:
    populations = population_series(traj)
    rows = ((k, k * traj.dt, v.real, v.imag, populations[k]) for k, v in enumerate(traj.values))
    return write_csv(destination, ["step_index", "time", "re_amplitude", "im_amplitude", "population"], rows,
                     comments=comments, timestamp=timestamp)
