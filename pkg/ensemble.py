"""
Monte Carlo ensembles of noisy feedback trajectories.

Realization i always uses the noise seed path_seed(master_seed, i). Paths are
cut into fixed batches [0, b), [b, 2b), ...; each batch is integrated in one
vectorised call and reduced to EnsembleStats, and the batch statistics are
merged in batch order. The result therefore does not depend on the number of
worker processes.

    stats = run_ensemble(params, n_paths=10_000, master_seed=42, dt=1e-3, workers=4)
    stats.mean, stats.stderr
"""

import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from analytic_solutions import series_amplitude_no_noise
from csv_output import write_csv
from noise_paths import generate_increments, grid_index, path_seed
from sdde_integrator import delay_steps, integrate_batch
from sim_errors import AlignmentError, InvalidParameterError
from system_params import SystemParams

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 512


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """
    Per-grid-point population statistics.

    Args:
        n: number of realizations
        mean: running mean of |P|² at every grid point
        m2: sum of squared deviations from the mean at every grid point
        dt: grid step
    """
    n: int
    mean: np.ndarray
    m2: np.ndarray
    dt: float

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParameterError(f"n must be >= 0, got {self.n}")
        mean = np.array(self.mean, dtype=float)
        m2 = np.array(self.m2, dtype=float)
        if mean.shape != m2.shape or mean.ndim != 1:
            raise InvalidParameterError("mean and m2 must be 1-D arrays of equal length")
        mean.setflags(write=False)
        m2.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "m2", m2)

    @classmethod
    def empty(cls, n_points: int, dt: float) -> "EnsembleStats":
        return cls(n=0, mean=np.zeros(n_points), m2=np.zeros(n_points), dt=dt)

    @classmethod
    def from_samples(cls, samples: np.ndarray, dt: float) -> "EnsembleStats":
        """Two-pass statistics of a (realizations × grid points) block"""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] == 0:
            return cls.empty(samples.shape[1], dt)
        mean = samples.mean(axis=0)
        m2 = np.sum((samples - mean) ** 2, axis=0)
        return cls(n=samples.shape[0], mean=mean, m2=m2, dt=dt)

    @property
    def n_points(self) -> int:
        return self.mean.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt

    @property
    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(self.n_points)
        return self.m2 / (self.n - 1)

    @property
    def stderr(self) -> np.ndarray:
        """sqrt(m2 / (n(n-1))); zero below two realizations"""
        if self.n < 2:
            return np.zeros(self.n_points)
        return np.sqrt(self.m2 / (self.n * (self.n - 1)))


def merge(a: EnsembleStats, b: EnsembleStats) -> EnsembleStats:
    """Combine two disjoint sample sets on the same grid (pairwise update)"""
    if a.n_points != b.n_points or not math.isclose(a.dt, b.dt, rel_tol=1e-12):
        raise AlignmentError("cannot merge statistics from different grids")
    if b.n == 0:
        return a
    if a.n == 0:
        return b
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + delta ** 2 * (a.n * b.n / n)
    return EnsembleStats(n=n, mean=mean, m2=m2, dt=a.dt)


def _batches(n_paths: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(start, min(start + batch_size, n_paths)) for start in range(0, n_paths, batch_size)]


def _run_batch(task: tuple) -> EnsembleStats:
    p, master_seed, start, stop, dt, n_steps = task
    seeds = [path_seed(master_seed, i) for i in range(start, stop)]
    increments = generate_increments(seeds, n_steps, dt, p.gamma)
    populations = integrate_batch(p, increments, dt, populations_only=True)
    return EnsembleStats.from_samples(populations, dt)


def _reduce(results: Iterable[EnsembleStats], n_points: int, dt: float, n_batches: int) -> EnsembleStats:
    total = EnsembleStats.empty(n_points, dt)
    for index, stats in enumerate(results, start=1):
        total = merge(total, stats)
        logger.debug(f"Merged batch {index}/{n_batches} (n={total.n})")
    return total


def run_ensemble(p: SystemParams, n_paths: int, master_seed: int, dt: float, t_max: Optional[float] = None,
                 workers: int = 1, batch_size: int = DEFAULT_BATCH) -> EnsembleStats:
    """
    Integrate n_paths realizations and accumulate population statistics.

    Args:
        p: scenario parameters (p.gamma sets the noise strength)
        n_paths: number of realizations, >= 1
        master_seed: ensemble seed
        dt: grid step, must divide τ
        t_max: grid-aligned horizon, default 3τ
        workers: worker processes; 1 runs in-process
        batch_size: realizations per batch; fixes the reduction order

    Returns: EnsembleStats on the grid 0, dt, ..., t_max
    """
    if n_paths < 1:
        raise InvalidParameterError(f"n_paths must be >= 1, got {n_paths}")
    if workers < 1 or batch_size < 1:
        raise InvalidParameterError(f"workers and batch_size must be >= 1, got {workers}, {batch_size}")
    delay_steps(p, dt)
    t_max = 3.0 * p.tau if t_max is None else t_max
    n_steps = grid_index(t_max, dt, "t_max")
    if n_steps < 1:
        raise InvalidParameterError(f"t_max must be at least one step, got {t_max}")

    batches = _batches(n_paths, batch_size)
    tasks = [(p, master_seed, start, stop, dt, n_steps) for start, stop in batches]
    logger.info(f"Ensemble: {n_paths} paths in {len(batches)} batches, {n_steps} steps, workers={workers}")
    if workers == 1 or len(batches) == 1:
        stats = _reduce(map(_run_batch, tasks), n_steps + 1, dt, len(batches))
    else:
        with Pool(processes=min(workers, len(batches))) as pool:
            stats = _reduce(pool.imap(_run_batch, tasks), n_steps + 1, dt, len(batches))
    logger.info(f"Ensemble done: n={stats.n}")
    return stats


def phase_difference_map(p_base: SystemParams, phases: Sequence[float], times: Sequence[float], n_paths: int,
                         master_seed: int, dt: float, workers: int = 1,
                         batch_size: int = DEFAULT_BATCH) -> np.ndarray:
    """
    Noise-free minus noise-averaged population over a (phase, time) grid.

    Entry (i, j) is |P(t_j)|²_{γ=0} - <|P(t_j)|²> at φ = phases[i]. The noise-free
    value comes from the delay series; every phase reuses the same noise
    realizations (same master_seed). Negative entries mean noise raises the
    population.

    Returns: array of shape (len(phases), len(times))
    """
    if len(phases) == 0 or len(times) == 0:
        raise InvalidParameterError("phase and time grids must be nonempty")
    indices = np.array([grid_index(t, dt, "time") for t in times])
    if np.any(indices < 0):
        raise InvalidParameterError("times must be >= 0")
    t_max = max(int(indices.max()), 1) * dt
    times = indices * dt

    result = np.empty((len(phases), len(times)))
    for i, phi in enumerate(phases):
        params = p_base.with_phi(phi)
        stats = run_ensemble(params, n_paths, master_seed, dt, t_max=t_max, workers=workers,
                             batch_size=batch_size)
        reference = np.abs(series_amplitude_no_noise(times, params)) ** 2
        result[i] = reference - stats.mean[indices]
        logger.info(f"Phase {i + 1}/{len(phases)} (phi={params.phi:.6g}) done")
    return result


def write_stats_csv(stats: EnsembleStats, destination: Optional[str], comments: Sequence[str] = (),
                    timestamp: bool = False) -> int:
    stderr = stats.stderr
    rows = ((k * stats.dt, stats.mean[k], stderr[k], stats.n) for k in range(stats.n_points))
    return write_csv(destination, ["time", "mean_population", "stderr", "n"], rows,
                     comments=comments, timestamp=timestamp)
