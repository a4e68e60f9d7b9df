"""Configuration management for kdvduo runs."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np
from dotenv import load_dotenv

from core import Grid, StatePair, SystemParams, sine_state, validate_params
from errors import ConfigError, KdvDuoError
from hum_control import ControlConfig

__version__ = "0.1.0"

# Load environment variables from .env file
load_dotenv()


@dataclass
class Config:
    """Process-level settings read from the environment."""

    # Output settings
    output_dir: str = "kdvduo-runs"
    threads: int = 1

    # S3 settings
    s3_bucket_name: str = ""
    aws_region: str = "us-east-1"

    # MongoDB settings
    mongo_connection_string: str = ""
    mongo_database_name: str = ""
    mongo_collection_name: str = ""

    # Logging
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Config":
        """Create configuration from environment variables."""
        threads_env = os.getenv("KDVDUO_THREADS", "1").strip()
        try:
            threads = int(threads_env)
        except ValueError:
            raise ValueError(f"KDVDUO_THREADS must be an integer, got '{threads_env}'") from None
        if threads < 1:
            raise ValueError(f"KDVDUO_THREADS must be at least 1, got {threads}")

        return cls(
            output_dir=os.getenv("KDVDUO_OUTPUT_DIR", "kdvduo-runs").strip(),
            threads=threads,
            s3_bucket_name=os.getenv("S3_BUCKET_NAME", "").strip(),
            aws_region=os.getenv("AWS_REGION", "us-east-1").strip(),
            mongo_connection_string=os.getenv("MONGO_CONNECTION_STRING", "").strip(),
            mongo_database_name=os.getenv("MONGO_DATABASE_NAME", "").strip(),
            mongo_collection_name=os.getenv("MONGO_COLLECTION_NAME", "").strip(),
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        )


EXPERIMENTS = (
    "simulate",
    "adjoint",
    "critical-atlas",
    "witness-scan",
    "gramian-margin",
    "control",
    "nonlinear-control",
    "verify-suite",
)

# Subcommand names accepted in place of the experiment names above.
EXPERIMENT_ALIASES = {
    "atlas": "critical-atlas",
    "witness": "witness-scan",
    "margin": "gramian-margin",
    "nlcontrol": "nonlinear-control",
    "verify": "verify-suite",
}

DEFAULT_TOLERANCES: Dict[str, float] = {
    "hum_tol": 1e-3,
    "hum_maxit": 300,
    "picard_tol": 1e-10,
    "picard_maxit": 50,
    "outer_tol": 1e-3,
    "outer_maxit": 20,
    "shift": 0.0,
    "lanczos_steps": 60,
}

_INTEGER_TOLERANCES = ("hum_maxit", "picard_maxit", "outer_maxit", "lanczos_steps")

_KNOWN_KEYS = {
    "experiment", "params", "grid", "control", "seed", "output_dir", "tolerances",
    "init", "target", "L_max", "include_zero", "p_grid", "damping", "self_terms",
    "adjoint_mode", "verify_level", "amplitude",
}

FieldSpec = Union[str, Dict[str, List[float]]]


def canonical_experiment(name: str) -> str:
    name = EXPERIMENT_ALIASES.get(name, name)
    if name not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown value '{name}'")
    return name


def _require(data: Dict[str, Any], key: str, where: str = "") -> Any:
    if key not in data:
        raise ConfigError(f"{where}{key}: required field missing")
    return data[key]


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    return float(value)


def _field_spec(value: Any, name: str) -> FieldSpec:
    if value == "zero":
        return "zero"
    if not isinstance(value, dict) or set(value) - {"u", "v"}:
        raise ConfigError(f"{name}: expected \"zero\" or {{\"u\": [...], \"v\": [...]}}")
    return {key: [_number(a, f"{name}.{key}") for a in value.get(key, [])] for key in ("u", "v")}


@dataclass
class ExperimentConfig:
    """One experiment, parsed from a JSON document with every default resolved."""

    experiment: str
    params: SystemParams
    grid: Grid
    control: ControlConfig = ControlConfig.FOUR_CONTROL
    seed: int = 0
    output_dir: Optional[str] = None
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    init: FieldSpec = "zero"
    target: FieldSpec = "zero"
    amplitude: float = 1.0
    L_max: float = 20.0
    include_zero: bool = True
    p_grid: Union[Dict[str, float], List[float]] = field(
        default_factory=lambda: {"start": 0.0, "stop": 50.0, "num": 201})
    damping: float = 1.0
    self_terms: bool = False
    adjoint_mode: str = "transpose"
    verify_level: str = "quick"

    @classmethod
    def from_json(cls, path: str, overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """Parse a JSON config file; ``overrides`` replace top-level fields before validation."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if overrides and isinstance(data, dict):
            data = {**data, **overrides}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown field")

        experiment = canonical_experiment(str(_require(data, "experiment")))
        params_data = _require(data, "params")
        if not isinstance(params_data, dict):
            raise ConfigError("params: expected an object")
        for key in ("a", "b", "c"):
            _require(params_data, key, "params.")
        unknown = set(params_data) - {"a", "b", "c", "r", "a1", "a2"}
        if unknown:
            raise ConfigError(f"params.{sorted(unknown)[0]}: unknown field")
        try:
            params = validate_params(SystemParams(**{
                key: _number(value, f"params.{key}") for key, value in params_data.items()
            }))
        except KdvDuoError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"params: {e}") from e

        grid_data = _require(data, "grid")
        if not isinstance(grid_data, dict):
            raise ConfigError("grid: expected an object")
        try:
            grid = Grid(
                L=_number(_require(grid_data, "L", "grid."), "grid.L"),
                T=_number(_require(grid_data, "T", "grid."), "grid.T"),
                nx=int(_number(_require(grid_data, "nx", "grid."), "grid.nx")),
                nt=int(_number(_require(grid_data, "nt", "grid."), "grid.nt")),
            )
        except KdvDuoError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"grid: {e}") from e

        try:
            control = ControlConfig.from_name(str(data.get("control", "FourControl")))
        except KdvDuoError as e:
            raise ConfigError(f"control: {e}") from e

        tolerances = dict(DEFAULT_TOLERANCES)
        given = data.get("tolerances", {})
        if not isinstance(given, dict):
            raise ConfigError("tolerances: expected an object")
        for key, value in given.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}: unknown field")
            value = _number(value, f"tolerances.{key}")
            tolerances[key] = int(value) if key in _INTEGER_TOLERANCES else value

        cfg = cls(
            experiment=experiment,
            params=params,
            grid=grid,
            control=control,
            seed=int(data.get("seed", 0)),
            output_dir=data.get("output_dir"),
            tolerances=tolerances,
            init=_field_spec(data.get("init", "zero"), "init"),
            target=_field_spec(data.get("target", "zero"), "target"),
            amplitude=_number(data.get("amplitude", 1.0), "amplitude"),
            L_max=_number(data.get("L_max", 20.0), "L_max"),
            include_zero=bool(data.get("include_zero", True)),
            p_grid=data.get("p_grid", {"start": 0.0, "stop": 50.0, "num": 201}),
            damping=_number(data.get("damping", 1.0), "damping"),
            self_terms=bool(data.get("self_terms", False)),
            adjoint_mode=str(data.get("adjoint_mode", "transpose")),
            verify_level=str(data.get("verify_level", "quick")),
        )
        cfg._check_experiment_fields(data)
        return cfg

    def _check_experiment_fields(self, data: Dict[str, Any]) -> None:
        if self.experiment in ("control", "nonlinear-control") and "target" not in data:
            raise ConfigError("target: required field missing")
        if self.experiment == "critical-atlas" and "L_max" not in data:
            raise ConfigError("L_max: required field missing")
        if self.experiment in ("critical-atlas", "witness-scan") and self.params.r <= 0:
            raise ConfigError(f"params.r: must be positive for {self.experiment}")
        if self.adjoint_mode not in ("transpose", "reflection"):
            raise ConfigError(f"adjoint_mode: unknown value '{self.adjoint_mode}'")
        if self.verify_level not in ("quick", "full"):
            raise ConfigError(f"verify_level: unknown value '{self.verify_level}'")
        if not (0 < self.damping <= 1):
            raise ConfigError(f"damping: must lie in (0, 1], got {self.damping}")
        self.p_values()

    def p_values(self) -> np.ndarray:
        spec = self.p_grid
        if isinstance(spec, dict):
            try:
                values = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"p_grid: expected start, stop and num ({e})") from e
        elif isinstance(spec, list):
            values = np.array([_number(v, "p_grid") for v in spec])
        else:
            raise ConfigError("p_grid: expected an object or a list")
        if values.size == 0:
            raise ConfigError("p_grid: no values")
        return values

    def state(self, spec: FieldSpec, grid: Optional[Grid] = None) -> StatePair:
        """Build a state on ``grid`` (default: own grid) from a sine-mode spec."""
        grid = grid or self.grid
        if spec == "zero":
            return StatePair.zeros(grid.nx)
        return self.amplitude * sine_state(grid, spec.get("u"), spec.get("v"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "control": self.control.value,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "tolerances": dict(self.tolerances),
            "init": self.init,
            "target": self.target,
            "amplitude": self.amplitude,
            "L_max": self.L_max,
            "include_zero": self.include_zero,
            "p_grid": self.p_grid,
            "damping": self.damping,
            "self_terms": self.self_terms,
            "adjoint_mode": self.adjoint_mode,
            "verify_level": self.verify_level,
        }
