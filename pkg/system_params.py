"""
Physical parameters of a single feedback scenario.

    params = SystemParams.from_dimensionless(Gamma_tau=0.5, gamma_tau=2.0, phi=3.3)
    params.feedback_factor   # Γ e^{-iφ + Γτ}
"""

import math
from dataclasses import dataclass, replace

from sim_errors import InvalidParameterError

TWO_PI = 2.0 * math.pi

# Stored phases are rounded to this many decimals after reduction, so that
# phi and phi + 2πn map to the same float.
PHASE_DECIMALS = 12


def reduce_phase(phi: float) -> float:
    """Reduce a feedback phase to [0, 2π)"""
    if not math.isfinite(phi):
        raise InvalidParameterError(f"feedback phase must be finite, got {phi}")
    reduced = round(math.fmod(phi, TWO_PI), PHASE_DECIMALS)
    if reduced < 0.0:
        reduced = round(reduced + TWO_PI, PHASE_DECIMALS)
    if reduced >= TWO_PI:
        reduced = 0.0
    return reduced + 0.0  # no negative zero


def _require(condition: bool, message: str):
    if not condition:
        raise InvalidParameterError(message)


@dataclass(frozen=True)
class SystemParams:
    """
    Constants of one emitter-in-front-of-mirror scenario.

    Args:
        Gamma: radiative decay rate Γ (1/time)
        tau: feedback delay τ = 2L/c (time)
        phi: feedback phase ω₀τ in radians, stored reduced to [0, 2π)
        gamma: white-noise strength γ with <F_t F_s> = γ δ(t-s) (1/time)
    """
    Gamma: float
    tau: float
    phi: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        _require(math.isfinite(self.Gamma) and self.Gamma >= 0.0, f"Gamma must be >= 0, got {self.Gamma}")
        _require(math.isfinite(self.tau) and self.tau > 0.0, f"tau must be > 0, got {self.tau}")
        _require(math.isfinite(self.gamma) and self.gamma >= 0.0, f"gamma must be >= 0, got {self.gamma}")
        object.__setattr__(self, "phi", reduce_phase(self.phi))

    @classmethod
    def from_coupling(cls, g0: float, tau: float, phi: float = 0.0, gamma: float = 0.0) -> "SystemParams":
        """Build from the mirror coupling strength g₀ using Γ = g₀²π/2"""
        return cls(Gamma=g0 * g0 * math.pi / 2.0, tau=tau, phi=phi, gamma=gamma)

    @classmethod
    def from_dimensionless(cls, Gamma_tau: float, gamma_tau: float, phi: float, tau: float = 1.0) -> "SystemParams":
        """Build from the products Γτ and γτ"""
        _require(tau > 0.0, f"tau must be > 0, got {tau}")
        return cls(Gamma=Gamma_tau / tau, tau=tau, phi=phi, gamma=gamma_tau / tau)

    @property
    def feedback_factor(self) -> complex:
        """Γ e^{-iφ + Γτ}, the coefficient of every delayed contribution"""
        return self.Gamma * math.exp(self.Gamma * self.tau) * complex(math.cos(self.phi), -math.sin(self.phi))

    def with_phi(self, phi: float) -> "SystemParams":
        return replace(self, phi=phi)

    def with_gamma(self, gamma: float) -> "SystemParams":
        return replace(self, gamma=gamma)

    def as_dict(self) -> dict:
        return {"Gamma": self.Gamma, "tau": self.tau, "phi": self.phi, "gamma": self.gamma}


@dataclass(frozen=True)
class OUReference:
    """
    Generic Ornstein-Uhlenbeck velocity process u' = -γu + F_t.

    A0 is the amplitude of the mean-square displacement law
    <x(t)²> = (A0/γ²)[γt + e^{-γt} - 1]; the stationary velocity variance is A0/2.
    """
    A0: float
    gamma_ou: float

    def __post_init__(self):
        _require(math.isfinite(self.A0) and self.A0 >= 0.0, f"A0 must be >= 0, got {self.A0}")
        _require(math.isfinite(self.gamma_ou) and self.gamma_ou > 0.0, f"gamma_ou must be > 0, got {self.gamma_ou}")
