"""Experiment configuration: nested dataclasses loaded from YAML."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import CarrierConfig
from ..estimator import SearchGrid
from ..scene import SceneConfig
from ..signal import SoundingConfig


class ConfigError(ValueError):
    pass


@dataclass
class CarrierSection:
    center_frequency_hz: float = 0.275e12
    bandwidth_hz: float = 10e9
    num_subcarriers: int = 4096
    water_vapor_fraction: float = 0.01
    noise_power_w: float | None = None
    noise_figure_db: float = 10.0

    def build(self, **changes) -> CarrierConfig:
        kw = dict(
            center_frequency=self.center_frequency_hz,
            bandwidth=self.bandwidth_hz,
            num_subcarriers=self.num_subcarriers,
            water_vapor_fraction=self.water_vapor_fraction,
            noise_power=self.noise_power_w,
            noise_figure_db=self.noise_figure_db,
        )
        kw.update(changes)
        return CarrierConfig(**kw)


@dataclass
class SoundingSection:
    J: int = 16
    T: int = 16
    power_w: float = 1.0

    def build(self, frame: int = 0, user: int = 0, seed: int = 0, power_w: float | None = None) -> SoundingConfig:
        # fixed codebooks per run, fresh noise per frame and user
        return SoundingConfig(
            J=self.J,
            T=self.T,
            power_w=self.power_w if power_w is None else power_w,
            combiner_seed=seed * 1000 + 1,
            precoder_seed=seed * 1000 + 2,
            noise_seed=(seed * 1_000_003 + frame * 1009 + user) & 0xFFFFFFFF,
        )


@dataclass
class EstimatorSection:
    angle_step_deg: float = 0.5
    delay_oversample: int = 4
    refine_steps: int = 20
    threshold: float = 0.9
    rank: int = 1

    def grid(self) -> SearchGrid:
        return SearchGrid(math.radians(self.angle_step_deg), math.pi / 2, self.delay_oversample, None, self.refine_steps)


@dataclass
class MapperSection:
    cell_size_m: float = 0.25


@dataclass
class DelaySection:
    frame_period_s: float = 0.05
    payload_bits: float = 1e6
    processing_s: float = 0.002
    training_s: float = 0.001
    coherence_s: float = 0.01
    reference_speed_mps: float = 1.25
    service_rate_hz: float = 450.0
    threshold_s: float = 0.02


@dataclass
class SchemeSection:
    sensing_fraction: float = 0.25
    sensing_lag_slots: int = 2
    sensing_error_m: float = 0.005
    guard_horizon_s: float = 0.035  # guard distance = speed * horizon
    confidence_sigmas: float = 2.0
    beam_halfwidth_rad: float = 0.0139


@dataclass
class SweepSection:
    users: list = field(default_factory=lambda: [2, 4, 6, 8, 10, 12, 14, 16, 18, 20])
    mobility: dict = field(default_factory=lambda: {"static": 0.0, "low": 1.25, "high": 2.5})
    bandwidths_hz: list = field(default_factory=lambda: [7e9, 10e9, 15e9])
    runs: int = 200
    slots: int = 250
    step_s: float = 0.002
    turn_rate_hz: float = 0.5
    placements: int = 60


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    carrier: CarrierSection = field(default_factory=CarrierSection)
    sounding: SoundingSection = field(default_factory=SoundingSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    mapper: MapperSection = field(default_factory=MapperSection)
    delay: DelaySection = field(default_factory=DelaySection)
    schemes: SchemeSection = field(default_factory=SchemeSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    frames: int = 10
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        try:
            self.scene.validate()
            self.carrier.build()
            self.sounding.build()
            self.estimator.grid()
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        checks = [
            (self.frames >= 0, "frames must be >= 0"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.estimator.rank >= 1, "rank must be >= 1"),
            (self.estimator.threshold > 0, "threshold must be positive"),
            (self.mapper.cell_size_m > 0, "cell size must be positive"),
            (0 <= self.schemes.sensing_fraction <= 1, "sensing fraction must be in [0, 1]"),
            (self.schemes.sensing_lag_slots >= 0, "sensing lag must be >= 0"),
            (self.delay.frame_period_s > 0, "frame period must be positive"),
            (self.delay.service_rate_hz > 0, "service rate must be positive"),
            (self.delay.threshold_s > 0, "delay threshold must be positive"),
            (min(self.delay.processing_s, self.delay.training_s, self.delay.payload_bits) >= 0,
             "delay constants must be non-negative"),
            (self.sweep.runs >= 1 and self.sweep.slots >= 1, "sweep needs runs, slots >= 1"),
            (self.sweep.step_s > 0, "slot length must be positive"),
            (all(int(u) >= 0 for u in self.sweep.users), "user counts must be >= 0"),
            (all(float(v) >= 0 for v in self.sweep.mobility.values()), "speeds must be >= 0"),
            (all(float(w) > 0 for w in self.sweep.bandwidths_hz), "bandwidths must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    data = dict(data)
    for f in dataclasses.fields(cls):
        # YAML 1.1 reads exponents without a dot ("1e9") as strings
        if isinstance(data.get(f.name), str) and isinstance(f.default, float):
            try:
                data[f.name] = float(data[f.name])
            except ValueError as e:
                raise ConfigError(f"{where}.{f.name}: expected a number, got {data[f.name]!r}") from e
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"bad section {where!r}: {e}") from e


_SECTIONS = {
    "scene": SceneConfig,
    "carrier": CarrierSection,
    "sounding": SoundingSection,
    "estimator": EstimatorSection,
    "mapper": MapperSection,
    "delay": DelaySection,
    "schemes": SchemeSection,
    "sweep": SweepSection,
}


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    unknown = set(data) - set(_SECTIONS) - {"frames", "seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kw = {name: _build(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**kw, frames=int(data.get("frames", 10)), seed=int(data.get("seed", 0)))
    if "seed" in data:
        cfg.scene.seed = cfg.seed
    return cfg.validate()


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Copy of ``cfg`` with the run seed and the scene seed set to ``seed``."""
    out = dataclasses.replace(cfg, seed=int(seed), scene=dataclasses.replace(cfg.scene, seed=int(seed)))
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["scene"]["walls"] = list(cfg.scene.walls) if not isinstance(cfg.scene.walls, int) else cfg.scene.walls
    return d
