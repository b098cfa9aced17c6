"""
Scenario configuration for the command-line front end.

Values are layered: built-in defaults, then a JSON config file, then the
FEEDBACK_SIM_WORKERS environment variable, then command-line flags.

    config = resolve_config("run.json", overrides={"n_paths": 20000})
    config.params, config.dt
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping, Optional

from sim_errors import ConfigError, InvalidParameterError
from system_params import SystemParams

logger = logging.getLogger(__name__)

WORKERS_ENV = "FEEDBACK_SIM_WORKERS"
MIN_FIGURE_DIVISOR = 100


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One fully resolved run configuration.

    Default Γτ = 0.5 and γτ = 2 are choices of this package (no published values);
    dt = τ / dt_divisor.
    """
    Gamma_tau: float = 0.5
    gamma_tau: float = 2.0
    phi: float = 3.3
    tau: float = 1.0
    dt_divisor: int = 1000
    n_paths: int = 100_000
    master_seed: int = 42
    t_max_tau: float = 3.0
    output_path: Optional[str] = None
    workers: int = 1
    phase_steps: int = 32
    time_steps: int = 41
    lags: int = 10
    points: int = 61
    t_over_tau: float = 3.0
    timestamp: bool = True

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        for name in ("dt_divisor", "n_paths", "workers", "phase_steps", "time_steps", "lags", "points"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if not self.t_max_tau > 0.0:
            raise ConfigError(f"t_max_tau must be > 0, got {self.t_max_tau}")
        try:
            SystemParams.from_dimensionless(self.Gamma_tau, self.gamma_tau, self.phi, tau=self.tau)
        except InvalidParameterError as e:
            raise ConfigError(str(e)) from e

    @property
    def params(self) -> SystemParams:
        return SystemParams.from_dimensionless(self.Gamma_tau, self.gamma_tau, self.phi, tau=self.tau)

    @property
    def dt(self) -> float:
        return self.tau / self.dt_divisor

    @property
    def t_max(self) -> float:
        """Horizon rounded to the grid"""
        return round(self.t_max_tau * self.dt_divisor) * self.dt

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def header(self) -> str:
        """Single-line echo for the `# config:` header; fields that cannot change the data are left out"""
        data = self.to_dict()
        for name in ("timestamp", "workers", "output_path"):
            data.pop(name)
        return json.dumps(data, sort_keys=True)

    def warn_if_coarse(self):
        if self.dt_divisor < MIN_FIGURE_DIVISOR:
            logger.warning(f"dt_divisor={self.dt_divisor} is below {MIN_FIGURE_DIVISOR}; "
                           f"figure data will carry visible discretisation error")


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))


def _coerce(values: Mapping[str, Any]) -> Dict[str, Any]:
    unknown = sorted(set(values) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return dict(values)


def load_config(path: str) -> Dict[str, Any]:
    """Read a JSON object of ScenarioConfig fields; unknown keys are rejected"""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return _coerce(data)


def _environment() -> Dict[str, Any]:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return {}
    try:
        return {"workers": int(raw)}
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e


def resolve_config(config_path: Optional[str] = None,
                   overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """
    Build the effective configuration.

    Args:
        config_path: optional JSON file
        overrides: flag values; None entries are ignored

    Returns: ScenarioConfig with every field set
    """
    values: Dict[str, Any] = {}
    if config_path:
        values.update(load_config(config_path))
    values.update(_environment())
    values.update({k: v for k, v in _coerce(overrides or {}).items() if v is not None})
    try:
        config = ScenarioConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    logger.info(f"Resolved config: {json.dumps(config.to_dict(), sort_keys=True)}")
    return config

