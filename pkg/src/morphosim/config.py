"""Experiment configuration: six fixed sections, strict keys, JSON in and
out without loss.

Every section is a dataclass with explicit fields; from_dict rejects keys
it does not know, so typos fail loudly instead of silently running the
defaults. build_* helpers turn a validated config into live objects
(problem, controller, simulator) using the scene presets in gallery.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError

PRESETS = ("block", "walker", "swimmer")
REPRESENTATIONS = ("preset", "sdflerp", "implicit", "particle")
CONTROLLERS = ("sine", "table", "zero")
TASKS = ("speed", "turning")
MODES = ("control_only", "design_only", "codesign")
OPTIMIZERS = ("adam", "cmaes")


def _from_dict(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} section must be an object, got "
                          f"{type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**raw)


def _listify(value):
    if isinstance(value, (list, tuple)):
        return [_listify(v) for v in value]
    return value


@dataclass
class SceneSection:
    preset: str = "block"
    biome: str = "Ground"
    seed: int = 0
    terrain_base: float = 0.1
    terrain_amplitude: float = 0.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"scene.preset must be one of {PRESETS}, "
                              f"got {self.preset!r}")


@dataclass
class DesignSection:
    representation: str = "preset"
    params: list | None = None      # initial decoder vector override

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(
                f"design.representation must be one of {REPRESENTATIONS}, "
                f"got {self.representation!r}")


@dataclass
class ControllerSection:
    type: str = "sine"
    scale: float = 0.5              # random-init magnitude for sine gaits
    params: list | None = None      # explicit parameter override

    def __post_init__(self):
        if self.type not in CONTROLLERS:
            raise ConfigError(f"controller.type must be one of "
                              f"{CONTROLLERS}, got {self.type!r}")


@dataclass
class TaskSection:
    kind: str = "speed"
    direction: list = field(default_factory=lambda: [1.0, 0.0])

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ConfigError(f"task.kind must be one of {TASKS}, "
                              f"got {self.kind!r}")


@dataclass
class SimSection:
    dt: float = 1e-4
    substeps: int = 200             # episode length
    substeps_per_control: int = 20
    gravity: list = field(default_factory=lambda: [0.0, -9.8])
    dtype: str = "float64"
    deterministic: bool = True

    def __post_init__(self):
        if self.substeps < 0:
            raise ConfigError("sim.substeps must be >= 0")


@dataclass
class OptimizerSection:
    mode: str = "codesign"
    optimizer: str = "adam"
    budget: int = 10
    lr: float = 0.01
    n_seeds: int = 1
    checkpoint_n: int = 16
    sigma: float = 0.1
    lam: int = 10
    sweep_index: int = 4
    sweep_lo: float = 0.02
    sweep_hi: float = 0.98
    sweep_points: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"optimizer.mode must be one of {MODES}, "
                              f"got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer.optimizer must be one of "
                              f"{OPTIMIZERS}, got {self.optimizer!r}")
        if self.budget < 0:
            raise ConfigError("optimizer.budget must be >= 0")


_SECTIONS = {"scene": SceneSection, "design": DesignSection,
             "controller": ControllerSection, "task": TaskSection,
             "sim": SimSection, "optimizer": OptimizerSection}


@dataclass
class ExperimentConfig:
    scene: SceneSection = field(default_factory=SceneSection)
    design: DesignSection = field(default_factory=DesignSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    task: TaskSection = field(default_factory=TaskSection)
    sim: SimSection = field(default_factory=SimSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, section_cls in _SECTIONS.items():
            if name in raw:
                try:
                    kw[name] = _from_dict(section_cls, raw[name], name)
                except TypeError as e:
                    raise ConfigError(f"bad {name} section: {e}") from None
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = open(path).read()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: {kk: _listify(vv) for kk, vv in v.items()}
                for k, v in out.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
