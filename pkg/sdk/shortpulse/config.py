"""
Scenario configuration for the shortpulse experiments.

A scenario file is a YAML document::

    scenario: converge
    grid: {length: 64pi, n: 1024}
    data: {shape: gaussian_derivative, amplitude: 0.1, width: 1.0}
    run: {epsilons: [0.2, 0.1, 0.05, 0.025], T: 1.0, s: 4.0}
    tolerances: {balance_residual: 1.0e-3}

Every omitted entry takes its default; unknown entries are rejected with the
dotted key path. Run-environment defaults (output directory, thread count,
log level) come from ``SHORTPULSE_*`` environment variables, which the CLI
loads from a ``.env`` file via python-dotenv.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .exceptions import ConfigInvalid
from .justification import StudyConfig

logger = logging.getLogger(__name__)

SCENARIOS = ("simulate-sp", "simulate-kg", "justify", "converge", "balance")
SHAPES = ("gaussian_derivative", "sine_packet")
PERTURBATIONS = ("none", "random")
VELOCITIES = ("none", "slaved")

ENV_OUTPUT_DIR = "SHORTPULSE_OUTPUT_DIR"
ENV_LOG_LEVEL = "SHORTPULSE_LOG_LEVEL"
ENV_THREADS = "SHORTPULSE_THREADS"

_PI_LENGTH = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*$")


@dataclass(frozen=True)
class GridSection:
    length: float = 64.0 * math.pi
    n: int = 1024


@dataclass(frozen=True)
class DataSection:
    shape: str = "gaussian_derivative"
    amplitude: float = 0.1
    width: float = 1.0
    tune_delta: bool = True
    perturbation: str = "random"
    perturbation_norm: float = 0.5
    velocity: str = "slaved"


@dataclass(frozen=True)
class RunSection:
    epsilons: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    T: float = 1.0
    s: float = 4.0
    delta_cap: float = 0.1
    cfl: float = 0.2
    sp_dt: float = 0.01
    samples: int = 200
    linear: bool = False
    manufactured: bool = False
    include_time_correction: bool = True
    margin: float = 0.02
    slope_cap: float = 1e3
    strides: Tuple[int, ...] = (1, 2, 4)


@dataclass(frozen=True)
class TolerancesSection:
    mean_tol: float = 1e-8
    quadrature_tol: float = 1e-4
    balance_residual: float = 1e-3
    energy_rate_residual: float = 1e-5
    slope_min: float = 0.8
    band_factor: float = 2.0
    gronwall_spread: float = 0.2
    C0_cap: float = 1e3
    C1_cap: float = 1e3
    bound_cap: float = 1e3


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated scenario configuration.

    Attributes:
        scenario: One of :data:`SCENARIOS`.
        grid: The short-pulse (xi) grid.
        data: Initial-data choices.
        run: Evolution and sweep parameters.
        tolerances: Check thresholds.
        output_dir: Report directory.
        seed: Seed of the random perturbation.
        threads: Worker processes for the epsilon sweep.
    """

    scenario: str = "converge"
    grid: GridSection = field(default_factory=GridSection)
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)
    tolerances: TolerancesSection = field(default_factory=TolerancesSection)
    output_dir: Optional[str] = None
    seed: int = 0
    threads: int = 1

    def snapshot(self) -> Dict[str, Any]:
        """Plain-data copy for the run manifest."""
        out = asdict(self)
        out["run"]["epsilons"] = list(self.run.epsilons)
        out["run"]["strides"] = list(self.run.strides)
        return out

    def to_study_config(self, epsilons: Optional[Tuple[float, ...]] = None) -> StudyConfig:
        d, r, t = self.data, self.run, self.tolerances
        return StudyConfig(
            length=self.grid.length, n=self.grid.n,
            shape=d.shape, amplitude=d.amplitude, width=d.width, tune_delta=d.tune_delta,
            perturbation=d.perturbation, perturbation_norm=d.perturbation_norm, velocity=d.velocity,
            epsilons=tuple(r.epsilons if epsilons is None else epsilons), T=r.T, s=r.s,
            delta_cap=r.delta_cap, cfl=r.cfl, sp_dt=r.sp_dt, samples=r.samples, linear=r.linear,
            manufactured=r.manufactured, include_time_correction=r.include_time_correction,
            margin=r.margin, slope_cap=r.slope_cap, mean_tol=t.mean_tol,
            C0_cap=t.C0_cap, C1_cap=t.C1_cap, bound_cap=t.bound_cap,
            seed=self.seed, threads=self.threads,
        )


# ---------------------------------------------------------------------------
# Coercion
# ---------------------------------------------------------------------------

def _as_float(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigInvalid(key, "expected a number", value)
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigInvalid(key, "expected a number", value) from None
    if not math.isfinite(number):
        raise ConfigInvalid(key, "must be finite", value)
    return number


def _as_length(value: Any, key: str) -> float:
    if isinstance(value, str):
        match = _PI_LENGTH.match(value)
        if match:
            factor = match.group(1)
            return (_as_float(factor, key) if factor else 1.0) * math.pi
    return _as_float(value, key)


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool):
        raise ConfigInvalid(key, "expected an integer", value)
    if isinstance(value, int):
        return value
    number = _as_float(value, key)
    if number != int(number):
        raise ConfigInvalid(key, "expected an integer", value)
    return int(number)


def _as_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no"):
        return value.lower() in ("true", "yes")
    raise ConfigInvalid(key, "expected true or false", value)


def _as_str(value: Any, key: str) -> str:
    if not isinstance(value, str):
        raise ConfigInvalid(key, "expected a string", value)
    return value


def _as_list(item):
    def coerce(value: Any, key: str) -> tuple:
        if not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(item(v, f"{key}[{i}]") for i, v in enumerate(value))
    return coerce


_COERCERS = {
    "float": _as_float,
    "int": _as_int,
    "bool": _as_bool,
    "str": _as_str,
    "Tuple[float, ...]": _as_list(_as_float),
    "Tuple[int, ...]": _as_list(_as_int),
}


def _section(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, Mapping):
        raise ConfigInvalid(name, "expected a mapping", raw)
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key not in known:
            raise ConfigInvalid(path, "unknown key", value)
        if name == "grid" and key == "length":
            values[key] = _as_length(value, path)
        else:
            values[key] = _COERCERS[known[key].type](value, path)
    return cls(**values)


def _choice(value: str, options: Tuple[str, ...], key: str) -> None:
    if value not in options:
        raise ConfigInvalid(key, f"must be one of {', '.join(options)}", value)


def validate(config: ExperimentConfig) -> ExperimentConfig:
    """Range checks that depend on more than one entry.

    Raises:
        ConfigInvalid: Naming the offending key.
    """
    g, d, r, t = config.grid, config.data, config.run, config.tolerances
    _choice(config.scenario, SCENARIOS, "scenario")
    if g.n < 8 or g.n % 2:
        raise ConfigInvalid("grid.n", "must be even and >= 8", g.n)
    if g.length <= 0:
        raise ConfigInvalid("grid.length", "must be positive", g.length)
    _choice(d.shape, SHAPES, "data.shape")
    _choice(d.perturbation, PERTURBATIONS, "data.perturbation")
    _choice(d.velocity, VELOCITIES, "data.velocity")
    if d.amplitude < 0:
        raise ConfigInvalid("data.amplitude", "must be >= 0", d.amplitude)
    if d.width <= 0:
        raise ConfigInvalid("data.width", "must be positive", d.width)
    if not 0 <= d.perturbation_norm <= 1:
        raise ConfigInvalid("data.perturbation_norm", "must lie in [0, 1]", d.perturbation_norm)
    if r.T <= 0:
        raise ConfigInvalid("run.T", "must be positive", r.T)
    if not r.epsilons:
        raise ConfigInvalid("run.epsilons", "must not be empty", [])
    for i, eps in enumerate(r.epsilons):
        if not 0 < eps < 1:
            raise ConfigInvalid(f"run.epsilons[{i}]", "must lie in (0, 1)", eps)
    if config.scenario in ("justify", "converge") and r.s <= 3.5:
        raise ConfigInvalid("run.s", "must exceed 7/2", r.s)
    if config.scenario == "converge" and len(r.epsilons) < 3:
        raise ConfigInvalid("run.epsilons", "converge needs at least three values", list(r.epsilons))
    for key in ("delta_cap", "cfl", "sp_dt", "slope_cap"):
        if getattr(r, key) <= 0:
            raise ConfigInvalid(f"run.{key}", "must be positive", getattr(r, key))
    if r.samples < 2:
        raise ConfigInvalid("run.samples", "must be >= 2", r.samples)
    if not 0 <= r.margin < 1 / math.sqrt(3):
        raise ConfigInvalid("run.margin", "must lie in [0, 1/sqrt(3))", r.margin)
    for i, stride in enumerate(r.strides):
        if stride < 1:
            raise ConfigInvalid(f"run.strides[{i}]", "must be >= 1", stride)
    for f in fields(t):
        if getattr(t, f.name) <= 0:
            raise ConfigInvalid(f"tolerances.{f.name}", "must be positive", getattr(t, f.name))
    if config.threads < 1:
        raise ConfigInvalid("threads", "must be >= 1", config.threads)
    return config


def config_from_mapping(raw: Optional[Mapping[str, Any]]) -> ExperimentConfig:
    """Build and validate a configuration from parsed YAML."""
    raw = {} if raw is None else raw
    if not isinstance(raw, Mapping):
        raise ConfigInvalid("<root>", "expected a mapping at the top level", raw)
    sections = {"grid": GridSection, "data": DataSection, "run": RunSection,
                "tolerances": TolerancesSection}
    scalars = {"scenario": _as_str, "output_dir": _as_str, "seed": _as_int, "threads": _as_int}
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if key in sections:
            values[key] = _section(sections[key], value, key)
        elif key in scalars:
            values[key] = scalars[key](value, key)
        else:
            raise ConfigInvalid(key, "unknown key", value)
    return validate(ExperimentConfig(**values))


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a scenario file.

    Raises:
        ConfigInvalid: For a missing or unreadable file, invalid YAML, unknown
            keys or out-of-range values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read file: {exc.strerror or exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(str(path), f"invalid YAML: {exc}") from exc
    config = config_from_mapping(raw)
    logger.debug("parsed %s: scenario=%s", path, config.scenario)
    return config


def apply_overrides(config: ExperimentConfig, scenario: Optional[str] = None,
                    output_dir: Optional[str] = None, seed: Optional[int] = None,
                    threads: Optional[int] = None) -> ExperimentConfig:
    """Command-line and environment overrides, re-validated.

    ``output_dir`` falls back to ``$SHORTPULSE_OUTPUT_DIR`` then ``runs/<scenario>``;
    ``threads`` falls back to ``$SHORTPULSE_THREADS``.
    """
    changes: Dict[str, Any] = {}
    if scenario is not None:
        changes["scenario"] = scenario
    if seed is not None:
        changes["seed"] = seed
    if threads is None and os.getenv(ENV_THREADS):
        threads = _as_int(os.getenv(ENV_THREADS), ENV_THREADS)
    if threads is not None:
        changes["threads"] = threads
    updated = replace(config, **changes)
    if output_dir is None:
        output_dir = updated.output_dir or os.getenv(ENV_OUTPUT_DIR) or f"runs/{updated.scenario}"
    return validate(replace(updated, output_dir=output_dir))
