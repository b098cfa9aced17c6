"""
Closed-form reference curves for the emitter in front of a mirror.

    p = SystemParams.from_dimensionless(Gamma_tau=0.5, gamma_tau=2.0, phi=3.3)
    wigner_weisskopf_population(1.0, p)
    abs(series_amplitude_no_noise(2.5, p)) ** 2
    population_2tau_with_cross(np.linspace(1.0, 2.0, 11), p)
    population_3tau(2.5, p)

The closed forms accept a scalar or a numpy array of times and return the same
shape. population_3tau evaluates the noise moments by quadrature, one time at a
time.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import gammaln

from gaussian_moments import EDGE_TOLERANCE, NoiseMoments, QuadratureSettings, noise_moments
from sim_errors import DomainError, InvalidParameterError
from system_params import OUReference, SystemParams

__all__ = [
    "SystemParams", "OUReference",
    "wigner_weisskopf_population", "series_amplitude_no_noise",
    "population_2tau_paper", "population_2tau_with_cross",
    "population_3tau", "population_3tau_from_moments",
    "ou_kernel", "ou_msd", "feedback_ou_reference",
    "ou_velocity_autocovariance", "ou_velocity_paths",
]

logger = logging.getLogger(__name__)

TimeLike = Union[float, np.ndarray]

# Below this value of γ·T the bracket γT + e^{-γT} - 1 is taken from its Taylor series
SMALL_GAMMA_T = 1e-6


def _as_times(t: TimeLike) -> Tuple[np.ndarray, bool]:
    values = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(values)):
        raise InvalidParameterError("times must be finite")
    return values, values.ndim == 0


def _output(values: np.ndarray, scalar: bool):
    if scalar:
        return values.item()
    return values


def _require_nonnegative(t: np.ndarray, what: str = "t"):
    if np.any(t < 0.0):
        raise DomainError(f"{what} must be >= 0")


def _msd_bracket(gamma: float, T: np.ndarray) -> np.ndarray:
    """(γT + e^{-γT} - 1)/γ², switching to T²/2 - γT³/6 + γ²T⁴/24 for small γT"""
    T = np.asarray(T, dtype=float)
    x = gamma * T
    series = T * T / 2.0 - gamma * T ** 3 / 6.0 + gamma * gamma * T ** 4 / 24.0
    if gamma == 0.0:
        return series
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = (x + np.expm1(-x)) / (gamma * gamma)
    return np.where(np.abs(x) < SMALL_GAMMA_T, series, exact)


def wigner_weisskopf_population(t: TimeLike, p: SystemParams):
    """e^{-2Γt}: decay without feedback"""
    times, scalar = _as_times(t)
    _require_nonnegative(times)
    return _output(np.exp(-2.0 * p.Gamma * times), scalar)


def series_amplitude_no_noise(t: TimeLike, p: SystemParams):
    """
    Noise-free amplitude as the finite delay series.

    P(t) = Σ_{n=0}^{⌊t/τ⌋} e^{-Γt} [Γ e^{-iφ+Γτ} (t - nτ)]^n / n!, with Θ(0) = 1.
    The noise strength in `p` is ignored.
    """
    times, scalar = _as_times(t)
    _require_nonnegative(times)
    c = p.feedback_factor
    total = np.exp(-p.Gamma * times).astype(complex)
    if c == 0 or times.size == 0:
        return _output(total, scalar)
    magnitude = abs(c)
    n_max = int(math.floor(float(np.max(times)) / p.tau * (1.0 + EDGE_TOLERANCE)))
    for n in range(1, n_max + 1):
        lag = times - n * p.tau
        active = lag >= -EDGE_TOLERANCE * n * p.tau
        lag = np.clip(lag, 0.0, None)
        # log-space keeps large (Γ e^{Γτ} t)^n / n! finite
        with np.errstate(divide="ignore"):
            log_term = n * np.log(magnitude * lag) - gammaln(n + 1) - p.Gamma * times
        term = np.where(active, np.exp(log_term), 0.0) * complex(math.cos(n * p.phi), -math.sin(n * p.phi))
        total = total + term
    return _output(total, scalar)


def _second_window(t: TimeLike, p: SystemParams, name: str) -> Tuple[np.ndarray, bool]:
    times, scalar = _as_times(t)
    lower = p.tau * (1.0 - EDGE_TOLERANCE)
    upper = 2.0 * p.tau * (1.0 + EDGE_TOLERANCE)
    if np.any(times < lower) or np.any(times > upper):
        raise DomainError(f"{name} is valid on [τ, 2τ] = [{p.tau}, {2.0 * p.tau}]")
    return np.clip(times, p.tau, 2.0 * p.tau), scalar


def _noise_term(times: np.ndarray, p: SystemParams) -> np.ndarray:
    """(2Γ²/γ²) e^{2Γτ} (γT + e^{-γT} - 1) with T = t - τ"""
    return 2.0 * p.Gamma ** 2 * math.exp(2.0 * p.Gamma * p.tau) * _msd_bracket(p.gamma, times - p.tau)


def population_2tau_paper(t: TimeLike, p: SystemParams):
    """
    Noise-averaged population on [τ, 2τ] as published, without the cross term.

    e^{-2Γt}[1 + (2Γ²/γ²) e^{2Γτ} (γ(t-τ) + e^{-γ(t-τ)} - 1)]; for γ -> 0 the bracket
    is replaced by its series so the γ = 0 limit e^{-2Γt}[1 + Γ²e^{2Γτ}(t-τ)²] is finite.
    """
    times, scalar = _second_window(t, p, "population_2tau_paper")
    values = np.exp(-2.0 * p.Gamma * times) * (1.0 + _noise_term(times, p))
    return _output(values, scalar)


def population_2tau_with_cross(t: TimeLike, p: SystemParams):
    """
    Noise-averaged population on [τ, 2τ] including 2Γe^{Γτ}cos(φ)(t-τ)e^{-γτ/2}.

    At γ = 0 this is |series_amplitude_no_noise|² on the same window.
    """
    times, scalar = _second_window(t, p, "population_2tau_with_cross")
    cross = (2.0 * p.Gamma * math.exp(p.Gamma * p.tau) * math.cos(p.phi)
             * (times - p.tau) * math.exp(-0.5 * p.gamma * p.tau))
    values = np.exp(-2.0 * p.Gamma * times) * (1.0 + cross + _noise_term(times, p))
    return _output(values, scalar)


def population_3tau_from_moments(t: float, p: SystemParams, moments: NoiseMoments) -> float:
    """Assemble the 3τ population from precomputed noise averages (moments depend on τ, γ only)"""
    g = p.Gamma * math.exp(p.Gamma * p.tau)
    cos1, cos2 = math.cos(p.phi), math.cos(2.0 * p.phi)
    bracket = (1.0
               + 2.0 * g * cos1 * moments.mean_N
               + g ** 2 * moments.NNstar
               + 2.0 * g ** 2 * cos2 * moments.M
               + 2.0 * g ** 3 * cos1 * moments.NstarM
               + g ** 4 * moments.MMstar)
    return math.exp(-2.0 * p.Gamma * t) * bracket


def population_3tau(t: TimeLike, p: SystemParams, settings: Optional[QuadratureSettings] = None):
    """
    Noise-averaged population on [0, 3τ] from the five noise averages.

    Raises:
        DomainError: t outside [0, 3τ]
        QuadratureError: a moment integral did not converge
    """
    times, scalar = _as_times(t)
    _require_nonnegative(times)
    if np.any(times > 3.0 * p.tau * (1.0 + EDGE_TOLERANCE)):
        raise DomainError(f"population_3tau is valid on [0, 3τ] = [0, {3.0 * p.tau}]")
    values = np.empty(times.shape)
    for index, value in np.ndenumerate(times):
        if value < p.tau:
            values[index] = math.exp(-2.0 * p.Gamma * value)
            continue
        moments = noise_moments(float(value), p, settings)
        values[index] = population_3tau_from_moments(float(value), p, moments)
    return _output(values, scalar)


def ou_kernel(delta: TimeLike, p: SystemParams):
    """Γ² e^{2Γτ - γ|δ|}: correlation of the feedback-filtered noise"""
    delta, scalar = _as_times(delta)
    values = p.Gamma ** 2 * np.exp(2.0 * p.Gamma * p.tau - p.gamma * np.abs(delta))
    return _output(values, scalar)


def ou_msd(t: TimeLike, ref: OUReference):
    """<x(t)²> = (A0/γ²)[γt + e^{-γt} - 1]"""
    times, scalar = _as_times(t)
    _require_nonnegative(times)
    return _output(ref.A0 * _msd_bracket(ref.gamma_ou, times), scalar)


def feedback_ou_reference(p: SystemParams) -> OUReference:
    """The O-U process whose displacement law matches the feedback noise term: A0 = 2Γ²e^{2Γτ}, rate γ"""
    if p.gamma <= 0.0:
        raise DomainError("the feedback noise maps onto an O-U process only for gamma > 0")
    return OUReference(A0=2.0 * p.Gamma ** 2 * math.exp(2.0 * p.Gamma * p.tau), gamma_ou=p.gamma)


def ou_velocity_autocovariance(delta: TimeLike, ref: OUReference):
    """Stationary <u(t) u(t+δ)> = (A0/2) e^{-γ|δ|}"""
    delta, scalar = _as_times(delta)
    return _output(0.5 * ref.A0 * np.exp(-ref.gamma_ou * np.abs(delta)), scalar)


def ou_velocity_paths(ref: OUReference, n_paths: int, n_steps: int, dt: float,
                      seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample stationary O-U velocities and their displacements.

    Velocities follow the exact transition u_{k+1} = u_k e^{-γdt} + sqrt(A0/2 (1 - e^{-2γdt})) ξ_k
    from u_0 drawn from the stationary law; displacements x_k = ∫_0^{t_k} u dt'
    use the trapezoid rule.

    Returns: (velocity, displacement), each of shape (n_paths, n_steps + 1)
    """
    if n_paths < 1 or n_steps < 1:
        raise InvalidParameterError(f"n_paths and n_steps must be >= 1, got {n_paths}, {n_steps}")
    if not (math.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    rng = np.random.default_rng(seed)
    stationary_sd = math.sqrt(0.5 * ref.A0)
    decay = math.exp(-ref.gamma_ou * dt)
    kick = stationary_sd * math.sqrt(-math.expm1(-2.0 * ref.gamma_ou * dt))
    velocity = np.empty((n_paths, n_steps + 1))
    velocity[:, 0] = stationary_sd * rng.standard_normal(n_paths)
    noise = rng.standard_normal((n_paths, n_steps))
    for k in range(n_steps):
        velocity[:, k + 1] = decay * velocity[:, k] + kick * noise[:, k]
    displacement = cumulative_trapezoid(velocity, dx=dt, axis=1, initial=0)
    return velocity, displacement
