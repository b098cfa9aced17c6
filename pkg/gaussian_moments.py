"""
Noise averages of products of feedback phase factors.

For Gaussian white noise every phase integral φ(b, a) is a centred Gaussian
with Cov(φ(s1), φ(s2)) = γ·|s1 ∩ s2|, so any average of phase factors has the
closed form <exp(i Σ σ_k φ_k)> = exp(-Var/2). The five averages of the 3τ
population (<N>, <NN*>, <M>, <N*M>, <MM*>) are integrals of that closed form
over the ordered time domains of N and M, evaluated here by composite
trapezoid rules with Richardson extrapolation.

    params = SystemParams(Gamma=0.5, tau=1.0, gamma=1.0)
    moments = noise_moments(3.0, params)
    estimates = monte_carlo_moments(3.0, params, n_paths=10_000, master_seed=1, dt=0.01)
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from noise_paths import DEFAULT_CHUNK, generate_increments, grid_index, path_seed, prefix_sums
from sim_errors import AlignmentError, DomainError, InvalidParameterError, QuadratureError
from system_params import SystemParams

logger = logging.getLogger(__name__)

# Relative slack when comparing t against the window edges τ, 2τ, 3τ
EDGE_TOLERANCE = 1e-12
# Row block for the dense overlap kernels
KERNEL_BLOCK = 1024


@dataclass(frozen=True)
class Segment:
    """Signed interval [a, b]; sign is the sign of iφ(b, a) in the exponent"""
    a: float
    b: float
    sign: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.b < self.a:
            raise InvalidParameterError(f"segment needs finite a <= b, got [{self.a}, {self.b}]")
        if self.sign not in (1, -1):
            raise InvalidParameterError(f"segment sign must be +1 or -1, got {self.sign}")

    @property
    def length(self) -> float:
        return self.b - self.a


def segment_overlap(s1: Segment, s2: Segment) -> float:
    """Length of [s1.a, s1.b] ∩ [s2.a, s2.b]"""
    return max(0.0, min(s1.b, s2.b) - max(s1.a, s2.a))


def phase_moment(segments: Sequence[Segment], gamma: float) -> float:
    """
    <exp(i Σ_k σ_k φ(b_k, a_k))> for white noise of strength gamma.

    Args:
        segments: signed intervals; an empty list gives 1
        gamma: noise strength γ >= 0

    Returns: exp(-Var/2) with Var = γ Σ_k Σ_j σ_k σ_j overlap(k, j), a real number in (0, 1]
    """
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise InvalidParameterError(f"gamma must be >= 0, got {gamma}")
    if not segments:
        return 1.0
    a = np.array([s.a for s in segments])
    b = np.array([s.b for s in segments])
    sign = np.array([s.sign for s in segments], dtype=float)
    overlap = np.maximum(0.0, np.minimum.outer(b, b) - np.maximum.outer(a, a))
    variance = gamma * float(sign @ overlap @ sign)
    # rounding can push a vanishing variance slightly negative
    return math.exp(-0.5 * max(variance, 0.0))


@dataclass(frozen=True)
class QuadratureSettings:
    """
    Refinement controls for the moment integrals.

    A level with n intervals per panel is compared with the level at 2n; the
    Richardson value I_2n + (I_2n - I_n)/3 is accepted once |I_2n - I_n|/3 is
    below max(atol, rtol·|value|). At most `max_refinements` doublings are tried.
    """
    rtol: float = 1e-4
    atol: float = 1e-12
    base_nodes_low: int = 512
    base_nodes_high: int = 128
    max_refinements: int = 2

    def __post_init__(self):
        if not (self.rtol > 0.0 and self.atol >= 0.0):
            raise InvalidParameterError(f"tolerances must be positive, got rtol={self.rtol}, atol={self.atol}")
        if self.base_nodes_low < 1 or self.base_nodes_high < 1:
            raise InvalidParameterError("base node counts must be >= 1")
        if self.max_refinements < 1:
            raise InvalidParameterError(f"max_refinements must be >= 1, got {self.max_refinements}")


DEFAULT_SETTINGS = QuadratureSettings()


def _overlap_kernel(x: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Overlap of the windows [x-τ, x] and [y-τ, y] for every node pair"""
    return np.maximum(0.0, tau - np.abs(np.subtract.outer(x, y)))


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n + 1, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


def _interval_rule(t: float, tau: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite trapezoid rule on [τ, t] for t <= 3τ.

    Above 2τ the interval is cut at τ + L and 2τ (L = t - 2τ), and each panel gets
    n intervals. The first and last panels then share the step L/n with the
    simplex rule, so every kink of the overlap kernels falls on a node pair.
    """
    if t <= 2.0 * tau:
        breakpoints = [tau, t]
    else:
        breakpoints = [tau, t - tau, 2.0 * tau, t]
    nodes, weights = [], []
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        if hi <= lo:
            continue
        nodes.append(np.linspace(lo, hi, n + 1))
        weights.append(_trapezoid_weights(n, (hi - lo) / n))
    return np.concatenate(nodes), np.concatenate(weights)


def _simplex_rule(t: float, tau: float, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Iterated trapezoid rule on {2τ <= t1 <= t, τ <= t2 <= t1 - τ}.

    Returns (outer nodes t1_j, inner nodes t2_k, weights W[j, k]); W vanishes for
    k > j, so the ordering t2 <= t1 - τ is carried by the mesh.
    """
    h = (t - 2.0 * tau) / n
    outer = np.linspace(2.0 * tau, t, n + 1)
    inner = np.linspace(tau, t - tau, n + 1)
    inner_weights = np.tril(np.full((n + 1, n + 1), h))
    np.fill_diagonal(inner_weights, 0.5 * h)
    inner_weights[1:, 0] = 0.5 * h
    inner_weights[0, 0] = 0.0
    return outer, inner, _trapezoid_weights(n, h)[:, None] * inner_weights


def _kernel_sum(rows: np.ndarray, row_weights: np.ndarray, cols: np.ndarray, col_weights: np.ndarray,
                gamma: float, tau: float) -> float:
    """Σ_ij w_i w_j exp(γ·overlap(i, j)), built block by block"""
    total = 0.0
    for start in range(0, rows.size, KERNEL_BLOCK):
        block = np.exp(gamma * _overlap_kernel(rows[start:start + KERNEL_BLOCK], cols, tau))
        total += float(row_weights[start:start + KERNEL_BLOCK] @ block @ col_weights)
    return total


def _richardson(level: Callable[[int], float], base_nodes: int, settings: QuadratureSettings,
                label: str) -> float:
    n = base_nodes
    coarse = level(n)
    residual = math.inf
    for refinement in range(1, settings.max_refinements + 1):
        n *= 2
        fine = level(n)
        value = fine + (fine - coarse) / 3.0
        residual = abs(fine - coarse) / 3.0
        logger.debug(f"{label}: level {refinement}, n={n}, value={value:.12g}, residual={residual:.3e}")
        if residual <= max(settings.atol, settings.rtol * abs(value)):
            return value
        coarse = fine
    raise QuadratureError(f"{label} did not converge", residual=residual, level=settings.max_refinements)


def _check_upper(t: float, tau: float, name: str):
    if t > 3.0 * tau * (1.0 + EDGE_TOLERANCE):
        raise DomainError(f"{name} is only evaluated for t <= 3τ, got t={t}, τ={tau}")


def _clamp(t: float, edge: float) -> float:
    return edge if abs(t - edge) <= EDGE_TOLERANCE * edge else t


def mean_N(t: float, params: SystemParams) -> complex:
    """<N(t, τ)> = (t - τ)·e^{-γτ/2}"""
    tau = params.tau
    if t < tau * (1.0 - EDGE_TOLERANCE):
        raise DomainError(f"<N> needs t >= τ, got t={t}, τ={tau}")
    t = max(t, tau)
    return complex((t - tau) * math.exp(-0.5 * params.gamma * tau), 0.0)


def moment_NNstar(t: float, params: SystemParams, settings: Optional[QuadratureSettings] = None) -> float:
    """<|N(t, τ)|²>: double integral over [τ, t]², each node pair weighted by e^{-γτ}·e^{γ·overlap}"""
    settings = settings or DEFAULT_SETTINGS
    tau, gamma = params.tau, params.gamma
    _check_upper(t, tau, "<NN*>")
    t = _clamp(_clamp(t, 2.0 * tau), 3.0 * tau)
    if t <= tau:
        return 0.0

    def level(n: int) -> float:
        nodes, weights = _interval_rule(t, tau, n)
        return math.exp(-gamma * tau) * _kernel_sum(nodes, weights, nodes, weights, gamma, tau)

    return _richardson(level, settings.base_nodes_low, settings, "<NN*>")


def moment_M(t: float, params: SystemParams, settings: Optional[QuadratureSettings] = None) -> complex:
    """<M(t, 2τ)>; the two windows of every node pair are disjoint"""
    settings = settings or DEFAULT_SETTINGS
    tau, gamma = params.tau, params.gamma
    _check_upper(t, tau, "<M>")
    t = _clamp(t, 3.0 * tau)
    if t <= 2.0 * tau * (1.0 + EDGE_TOLERANCE):
        return 0j

    def level(n: int) -> float:
        outer, inner, weights = _simplex_rule(t, tau, n)
        pair = np.exp(-gamma * _overlap_kernel(outer, inner, tau))
        return math.exp(-gamma * tau) * float(np.sum(weights * pair))

    return complex(_richardson(level, settings.base_nodes_low, settings, "<M>"), 0.0)


def moment_NstarM(t: float, params: SystemParams, settings: Optional[QuadratureSettings] = None) -> complex:
    """<N*(t, τ) M(t, 2τ)>: triple integral, the N* window paired with both M windows"""
    settings = settings or DEFAULT_SETTINGS
    tau, gamma = params.tau, params.gamma
    _check_upper(t, tau, "<N*M>")
    t = _clamp(t, 3.0 * tau)
    if t <= 2.0 * tau * (1.0 + EDGE_TOLERANCE):
        return 0j

    def level(n: int) -> float:
        s, s_weights = _interval_rule(t, tau, n)
        outer, inner, weights = _simplex_rule(t, tau, n)
        weights = weights * np.exp(-gamma * _overlap_kernel(outer, inner, tau))
        with_outer = np.exp(gamma * _overlap_kernel(s, outer, tau))
        with_inner = np.exp(gamma * _overlap_kernel(s, inner, tau))
        per_s = np.sum((with_outer @ weights) * with_inner, axis=1)
        return math.exp(-1.5 * gamma * tau) * float(s_weights @ per_s)

    return complex(_richardson(level, settings.base_nodes_high, settings, "<N*M>"), 0.0)


def moment_MMstar(t: float, params: SystemParams, settings: Optional[QuadratureSettings] = None) -> float:
    """<|M(t, 2τ)|²>: four-fold integral over two copies of the M simplex"""
    settings = settings or DEFAULT_SETTINGS
    tau, gamma = params.tau, params.gamma
    _check_upper(t, tau, "<MM*>")
    t = _clamp(t, 3.0 * tau)
    if t <= 2.0 * tau * (1.0 + EDGE_TOLERANCE):
        return 0.0

    def level(n: int) -> float:
        outer, inner, weights = _simplex_rule(t, tau, n)
        weights = weights * np.exp(-gamma * _overlap_kernel(outer, inner, tau))
        outer_outer = np.exp(gamma * _overlap_kernel(outer, outer, tau))
        inner_outer = np.exp(gamma * _overlap_kernel(inner, outer, tau))
        inner_inner = np.exp(gamma * _overlap_kernel(inner, inner, tau))
        total = 0.0
        # conjugated copy at (t1_j, t2_k), direct copy at (t3_l, t4_m)
        for j in range(1, outer.size):
            k = slice(0, j + 1)
            x = outer_outer[j][None, :] * inner_outer[k, :]
            y = inner_outer[:, j][None, :] * inner_inner[k, :]
            per_k = np.sum((x @ weights) * y, axis=1)
            total += float(weights[j, k] @ per_k)
        return math.exp(-2.0 * gamma * tau) * total

    return _richardson(level, settings.base_nodes_high, settings, "<MM*>")


@dataclass(frozen=True)
class NoiseMoments:
    """The five noise averages at one time (real parts; the imaginary parts vanish)"""
    t: float
    mean_N: float
    NNstar: float
    M: float
    NstarM: float
    MMstar: float

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


MOMENT_NAMES = ("mean_N", "NNstar", "M", "NstarM", "MMstar")


def noise_moments(t: float, params: SystemParams, settings: Optional[QuadratureSettings] = None) -> NoiseMoments:
    """All five averages at t; they depend on τ and γ only"""
    settings = settings or DEFAULT_SETTINGS
    if t < 0.0:
        raise DomainError(f"t must be >= 0, got {t}")
    first = mean_N(t, params).real if t >= params.tau * (1.0 - EDGE_TOLERANCE) else 0.0
    return NoiseMoments(
        t=t,
        mean_N=first,
        NNstar=moment_NNstar(t, params, settings),
        M=moment_M(t, params, settings).real,
        NstarM=moment_NstarM(t, params, settings).real,
        MMstar=moment_MMstar(t, params, settings),
    )


def path_functionals(cumulative: np.ndarray, dt: float, t: float, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    N(t, τ) and M(t, 2τ) for every path.

    Args:
        cumulative: prefix sums Φ_k, one row per path (a 1-D array is one path)
        dt: grid step; t and tau must be grid-aligned
        t: evaluation time
        tau: delay

    Returns: complex arrays (N, M), one entry per path; zero below τ and 2τ respectively
    """
    cumulative = np.atleast_2d(np.asarray(cumulative, dtype=float))
    d = grid_index(tau, dt, "tau")
    it = grid_index(t, dt, "t")
    if d < 1:
        raise AlignmentError(f"tau={tau} must span at least one step of dt={dt}")
    if it >= cumulative.shape[1]:
        raise AlignmentError(f"t={t} lies beyond the paths ({cumulative.shape[1] - 1} steps)")
    n_paths = cumulative.shape[0]
    N = np.zeros(n_paths, dtype=complex)
    M = np.zeros(n_paths, dtype=complex)
    if it <= d:
        return N, M
    # z[:, m] = e^{-iφ(t1, t1-τ)} at t1 = (d + m)·dt
    z = np.exp(-1j * (cumulative[:, d:it + 1] - cumulative[:, :it + 1 - d]))
    N = trapezoid(z, dx=dt, axis=1)
    if it > 2 * d:
        inner = cumulative_trapezoid(z, dx=dt, axis=1, initial=0)
        M = trapezoid(z[:, d:] * inner[:, :it - 2 * d + 1], dx=dt, axis=1)
    return N, M


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    samples: int

    def deviation(self, expected: float) -> float:
        distance = abs(self.value - expected)
        if distance == 0.0:
            return 0.0
        return distance / self.stderr if self.stderr > 0.0 else math.inf


def monte_carlo_moments(t: float, params: SystemParams, n_paths: int, master_seed: int, dt: float,
                        chunk_size: int = DEFAULT_CHUNK) -> Dict[str, MomentEstimate]:
    """
    Sample means of the five functionals over counter-seeded noise paths.

    Returns: name -> MomentEstimate, with the names of NoiseMoments fields
    """
    if n_paths < 2:
        raise InvalidParameterError(f"need at least two paths for a standard error, got {n_paths}")
    n_steps = max(grid_index(t, dt, "t"), 1)
    samples = {name: [] for name in MOMENT_NAMES}
    for start in range(0, n_paths, chunk_size):
        seeds = [path_seed(master_seed, i) for i in range(start, min(start + chunk_size, n_paths))]
        cumulative = prefix_sums(generate_increments(seeds, n_steps, dt, params.gamma))
        N, M = path_functionals(cumulative, dt, t, params.tau)
        samples["mean_N"].append(N.real)
        samples["NNstar"].append(np.abs(N) ** 2)
        samples["M"].append(M.real)
        samples["NstarM"].append((np.conj(N) * M).real)
        samples["MMstar"].append(np.abs(M) ** 2)
        logger.debug(f"Moment paths {start}..{start + len(seeds)} done")

    estimates = {}
    for name, chunks in samples.items():
        values = np.concatenate(chunks)
        estimates[name] = MomentEstimate(
            value=float(values.mean()),
            stderr=float(values.std(ddof=1) / math.sqrt(values.size)),
            samples=int(values.size),
        )
    return estimates
