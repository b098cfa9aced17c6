"""
Gaussian white-noise phase paths on a uniform time grid.

The noise F_t never appears pointwise: a path stores the integrated increments
ΔW_k = ∫ F dt over each step (ΔW_k ~ N(0, γ·dt)) and their prefix sums, so the
phase integral φ(b, a) = ∫_a^b F dt' is a difference of two stored values.

    path = generate_path(seed=7, n_steps=3000, dt=1e-3, gamma=2.0)
    phase_integral(path, 0.5, 1.5)
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from csv_output import write_csv
from sim_errors import AlignmentError, InsufficientDataError, InvalidParameterError

logger = logging.getLogger(__name__)

# Increments are snapped to a 2**-40 rad lattice. While |cumulative| < 2**12
# every prefix sum and every difference of prefix sums is exact in float64.
LATTICE_EXPONENT = 40
GRID_TOLERANCE = 1e-9
DEFAULT_CHUNK = 1024


def grid_index(time: float, dt: float, what: str = "time") -> int:
    """Convert a grid-aligned time to its step index (no rounding to the nearest node)"""
    if not (math.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    ratio = time / dt
    index = round(ratio)
    if abs(ratio - index) > GRID_TOLERANCE * max(1.0, abs(ratio)):
        raise AlignmentError(f"{what}={time!r} is not a multiple of dt={dt!r}")
    return int(index)


def snap_to_lattice(values: np.ndarray) -> np.ndarray:
    return np.ldexp(np.rint(np.ldexp(values, LATTICE_EXPONENT)), -LATTICE_EXPONENT)


def path_seed(master_seed: int, index: int) -> int:
    """Seed of realization `index` in the ensemble `master_seed`; independent of execution order"""
    if master_seed < 0 or index < 0:
        raise InvalidParameterError(f"seeds and path indices must be >= 0, got {master_seed}, {index}")
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _validate_grid(n_steps: int, dt: float, gamma: float):
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidParameterError(f"n_steps must be a positive integer, got {n_steps}")
    if not (math.isfinite(dt) and dt > 0.0):
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise InvalidParameterError(f"gamma must be >= 0, got {gamma}")


def _draw_increments(seed: int, n_steps: int, dt: float, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return np.zeros(n_steps)
    rng = np.random.default_rng(seed)
    return snap_to_lattice(rng.standard_normal(n_steps) * math.sqrt(gamma * dt))


def prefix_sums(increments: np.ndarray) -> np.ndarray:
    """Φ_k = Σ_{j<k} ΔW_j along the last axis, with Φ_0 = 0"""
    shape = increments.shape[:-1] + (1,)
    return np.concatenate([np.zeros(shape), np.cumsum(increments, axis=-1)], axis=-1)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One white-noise realization; arrays are read-only"""
    dt: float
    increments: np.ndarray
    cumulative: np.ndarray
    seed_id: int
    gamma: float = 0.0

    def __post_init__(self):
        increments = np.array(self.increments, dtype=float)
        cumulative = np.array(self.cumulative, dtype=float)
        if cumulative.shape != (increments.size + 1,) or cumulative[0] != 0.0:
            raise InvalidParameterError("cumulative must hold len(increments)+1 prefix sums starting at 0")
        increments.setflags(write=False)
        cumulative.setflags(write=False)
        object.__setattr__(self, "increments", increments)
        object.__setattr__(self, "cumulative", cumulative)

    @property
    def n_steps(self) -> int:
        return self.increments.size

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, time: float) -> int:
        index = grid_index(time, self.dt)
        if not 0 <= index <= self.n_steps:
            raise AlignmentError(f"time {time} lies outside the path [0, {self.duration}]")
        return index


def generate_path(seed: int, n_steps: int, dt: float, gamma: float) -> NoisePath:
    """
    Draw one white-noise realization.

    Args:
        seed: integer seed; the same (seed, n_steps, dt, gamma) always gives the same path
        n_steps: number of increments
        dt: time step
        gamma: noise strength, <F_t F_s> = γ δ(t-s)

    Returns: NoisePath with increments ~ N(0, γ·dt); all zero when gamma == 0
    """
    _validate_grid(n_steps, dt, gamma)
    increments = _draw_increments(seed, int(n_steps), dt, gamma)
    return NoisePath(dt=dt, increments=increments, cumulative=prefix_sums(increments),
                     seed_id=int(seed), gamma=gamma)


def generate_increments(seeds: Sequence[int], n_steps: int, dt: float, gamma: float) -> np.ndarray:
    """Increments of several realizations, one row per seed (row i == generate_path(seeds[i], ...).increments)"""
    _validate_grid(n_steps, dt, gamma)
    if len(seeds) == 0:
        return np.zeros((0, int(n_steps)))
    return np.stack([_draw_increments(seed, int(n_steps), dt, gamma) for seed in seeds])


def phase_integral(path: NoisePath, a: float, b: float) -> float:
    """φ(b, a) = ∫_a^b F_t' dt' for grid times a <= b"""
    if b < a:
        raise InvalidParameterError(f"phase_integral needs a <= b, got a={a}, b={b}")
    return float(path.cumulative[path.index_of(b)] - path.cumulative[path.index_of(a)])


@dataclass(frozen=True)
class LagEstimate:
    """Ensemble average of e^{iφ(s+τ,s)} e^{-iφ(s'+τ,s')} at s - s' = lag"""
    lag: float
    estimate: complex
    stderr: float
    n_paths: int

    def deviation(self, expected: complex) -> float:
        """Distance to `expected` in units of the standard error"""
        distance = abs(self.estimate - expected)
        if distance == 0.0:
            return 0.0
        if self.stderr == 0.0:
            return math.inf
        return distance / self.stderr


def _per_path_correlations(cumulative: np.ndarray, window_steps: int, lag_steps: Sequence[int],
                           origin_stride: int) -> np.ndarray:
    theta = cumulative[:, window_steps:] - cumulative[:, :-window_steps]
    factors = np.exp(1j * theta)
    n_segments = factors.shape[1]
    out = np.empty((cumulative.shape[0], len(lag_steps)), dtype=complex)
    for j, lag in enumerate(lag_steps):
        shift = abs(lag)
        origins = np.arange(0, n_segments - shift, origin_stride)
        if origins.size == 0:
            raise InsufficientDataError(f"lag of {lag} steps leaves no segment pairs inside the paths")
        values = (factors[:, origins + shift] * np.conj(factors[:, origins])).mean(axis=1)
        out[:, j] = values if lag >= 0 else np.conj(values)
    return out


def _summarize(per_path: np.ndarray, lags: Sequence[float]) -> List[LagEstimate]:
    n_paths = per_path.shape[0]
    means = per_path.mean(axis=0)
    if n_paths > 1:
        spread = np.sum(np.abs(per_path - means) ** 2, axis=0)
        stderrs = np.sqrt(spread / (n_paths * (n_paths - 1)))
    else:
        # single path: no spread estimate
        stderrs = np.zeros(len(lags))
    return [LagEstimate(lag=float(lag), estimate=complex(m), stderr=float(s), n_paths=n_paths)
            for lag, m, s in zip(lags, means, stderrs)]


def _window_and_lags(dt: float, window: float, lags: Sequence[float]):
    window_steps = grid_index(window, dt, "window")
    if window_steps < 1:
        raise InvalidParameterError(f"window must span at least one step, got {window}")
    lag_steps = [grid_index(lag, dt, "lag") for lag in lags]
    return window_steps, lag_steps


def empirical_phase_autocovariance(paths: Iterable[NoisePath], window: float, lags: Sequence[float],
                                   origin_stride: int = 1) -> List[LagEstimate]:
    """
    Estimate <e^{iφ(s+τ,s)} e^{-iφ(s'+τ,s')}> for each lag s - s'.

    Every path contributes the average over all admissible origins s' (spaced
    `origin_stride` steps); the standard error is taken across paths, which
    are independent. For Gaussian white noise the exact value is
    e^{-γ·min(|lag|, τ)}.
    """
    paths = list(paths)
    if not paths:
        raise InsufficientDataError("empirical_phase_autocovariance needs at least one path")
    dt, n_steps = paths[0].dt, paths[0].n_steps
    for path in paths[1:]:
        if path.dt != dt or path.n_steps != n_steps:
            raise AlignmentError("all paths must share the same grid")
    window_steps, lag_steps = _window_and_lags(dt, window, lags)

    chunks = []
    for start in range(0, len(paths), DEFAULT_CHUNK):
        cumulative = np.stack([p.cumulative for p in paths[start:start + DEFAULT_CHUNK]])
        chunks.append(_per_path_correlations(cumulative, window_steps, lag_steps, origin_stride))
    return _summarize(np.concatenate(chunks), lags)


def sample_phase_autocovariance(master_seed: int, n_paths: int, n_steps: int, dt: float, gamma: float,
                                window: float, lags: Sequence[float], origin_stride: int = 1,
                                chunk_size: int = DEFAULT_CHUNK) -> List[LagEstimate]:
    """Same estimator, drawing the paths chunk by chunk so large ensembles never sit in memory at once"""
    if n_paths < 1:
        raise InsufficientDataError("need at least one path")
    window_steps, lag_steps = _window_and_lags(dt, window, lags)
    chunks = []
    for start in range(0, n_paths, chunk_size):
        seeds = [path_seed(master_seed, i) for i in range(start, min(start + chunk_size, n_paths))]
        cumulative = prefix_sums(generate_increments(seeds, n_steps, dt, gamma))
        chunks.append(_per_path_correlations(cumulative, window_steps, lag_steps, origin_stride))
        logger.debug(f"Autocovariance chunk {start}..{start + len(seeds)} done")
    return _summarize(np.concatenate(chunks), lags)


@dataclass(frozen=True)
class IncrementStats:
    """Pooled increment statistics of a path collection"""
    count: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    expected_variance: float
    lag1_correlation: float
    lag1_stderr: float


def increment_statistics(paths: Iterable[NoisePath]) -> IncrementStats:
    paths = list(paths)
    if not paths:
        raise InsufficientDataError("increment_statistics needs at least one path")
    data = np.stack([p.increments for p in paths])
    flat = data.ravel()
    count = flat.size
    if count < 2:
        raise InsufficientDataError("need at least two increments")
    mean = float(flat.mean())
    variance = float(flat.var(ddof=1))
    if data.shape[1] >= 2 and variance > 0.0:
        centred = data - mean
        pairs = centred[:, 1:] * centred[:, :-1]
        lag1 = float(pairs.mean() / flat.var())
        lag1_stderr = 1.0 / math.sqrt(pairs.size)
    else:
        lag1, lag1_stderr = 0.0, 0.0
    return IncrementStats(
        count=count,
        mean=mean,
        mean_stderr=math.sqrt(variance / count),
        variance=variance,
        variance_stderr=variance * math.sqrt(2.0 / (count - 1)),
        expected_variance=paths[0].gamma * paths[0].dt,
        lag1_correlation=lag1,
        lag1_stderr=lag1_stderr,
    )


def write_path_csv(path: NoisePath, destination: Optional[str], comments: Sequence[str] = (),
                   timestamp: bool = False) -> int:
    """Dump a path as step_index, time, increment, cumulative (the last row has no increment)"""
    rows = ((k, k * path.dt, path.increments[k] if k < path.n_steps else None, path.cumulative[k])
            for k in range(path.n_steps + 1))
    return write_csv(destination, ["step_index", "time", "increment", "cumulative"], rows,
                     comments=comments, timestamp=timestamp)
