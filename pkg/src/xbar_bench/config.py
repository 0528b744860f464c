"""Run configuration: one YAML file, schema-validated before any work.

Every section maps onto a dataclass; unknown keys are rejected at every
level so typos fail fast instead of silently running defaults.  The
physical-validity checks live on the underlying config types
(DeviceConfig, CostParams, FixedPointFormat, TrainConfig) and run at
construction time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .costmod import CostParams
from .errors import ConfigError
from .fxpquant import FixedPointFormat
from .memsim import DeviceConfig
from .networks import REGISTRY
from .nncore import TrainConfig

DEFAULT_SIGMAS = (0.0, 100.0, 200.0, 300.0, 400.0, 500.0)


@dataclass
class DataConfig:
    """Synthetic dataset parameters (see benchdata.gen_synthetic)."""

    n_per_class_session: int = 24
    seed: int = 7
    emg_std: float = 0.6
    session_std: float = 0.3
    pixel_std: float = 0.1

    def __post_init__(self) -> None:
        if self.n_per_class_session < 1:
            raise ConfigError("data.n_per_class_session must be >= 1")
        for name in ("emg_std", "session_std", "pixel_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"data.{name} must be nonnegative")


@dataclass
class DeviceTemplate:
    """Device distribution parameters shared by all trials.

    Sigma and the RNG seed vary per trial, so they are filled in by
    :meth:`instantiate` rather than stored here.
    """

    r_on_mean: float = 100.0
    r_off_mean: float = 2500.0
    n_states: int | str | None = 256
    positivity_floor: float = 1.0

    def __post_init__(self) -> None:
        # surface invalid constants immediately, not at first trial
        try:
            self.instantiate(sigma=0.0, seed=0)
        except ValueError as exc:
            raise ConfigError(f"bad device template: {exc}") from exc

    def instantiate(self, sigma: float, seed: int) -> DeviceConfig:
        return DeviceConfig(
            r_on_mean=self.r_on_mean,
            r_off_mean=self.r_off_mean,
            sigma=sigma,
            n_states=self.n_states,
            seed=seed,
            positivity_floor=self.positivity_floor,
        )


@dataclass
class SweepConfig:
    """Variability sweep grid."""

    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    seeds: tuple[int, ...] = tuple(range(10))
    adc_bits: int | None = 8
    calib_samples: int = 64

    def __post_init__(self) -> None:
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.sigmas:
            raise ConfigError("sweep.sigmas must be non-empty")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sweep.sigmas must be nonnegative")
        if not self.seeds:
            raise ConfigError("sweep.seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("sweep.seeds must be distinct")
        if self.adc_bits is not None and not 1 <= int(self.adc_bits) <= 16:
            raise ConfigError("sweep.adc_bits must be in [1, 16] or null")
        if self.calib_samples < 1:
            raise ConfigError("sweep.calib_samples must be >= 1")


_TRAIN_DEFAULTS = dict(
    learning_rate=0.1, epochs=40, batch_size=32, seed=1, dropout=0.0
)


@dataclass
class RunConfig:
    """Everything one pipeline run needs, resolved and validated."""

    networks: tuple[str, ...] = tuple(sorted(REGISTRY))
    out_dir: str = "runs/out"
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(**_TRAIN_DEFAULTS)
    )
    device: DeviceTemplate = field(default_factory=DeviceTemplate)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    cost: CostParams = field(default_factory=CostParams)
    fixed_point: FixedPointFormat = field(default_factory=FixedPointFormat)

    def __post_init__(self) -> None:
        self.networks = tuple(self.networks)
        if not self.networks:
            raise ConfigError("networks must be non-empty")
        unknown = [n for n in self.networks if n not in REGISTRY]
        if unknown:
            raise ConfigError(
                f"unknown networks {unknown}; choose from {sorted(REGISTRY)}"
            )
        if len(set(self.networks)) != len(self.networks):
            raise ConfigError("networks must be distinct")
        if not str(self.out_dir):
            raise ConfigError("out_dir must be non-empty")


_SECTION_TYPES = {
    "data": (DataConfig, None),
    "train": (TrainConfig, _TRAIN_DEFAULTS),
    "device": (DeviceTemplate, None),
    "sweep": (SweepConfig, None),
    "cost": (CostParams, None),
    "fixed_point": (FixedPointFormat, None),
}


def _build_section(cls, mapping, section: str, defaults: dict | None = None):
    if not isinstance(mapping, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in section {section!r}")
    kwargs = dict(defaults or {})
    kwargs.update(mapping)
    # YAML lists arrive as lists; tuple-typed fields normalize in __post_init__
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"bad section {section!r}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad section {section!r}: {exc}") from exc


def config_from_mapping(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed mapping, rejecting unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    top_names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - top_names)
    if unknown:
        raise ConfigError(f"unknown top-level config keys {unknown}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            cls, defaults = _SECTION_TYPES[key]
            kwargs[key] = _build_section(cls, value, key, defaults)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path) -> RunConfig:
    """Load and validate a YAML run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_mapping(raw)
