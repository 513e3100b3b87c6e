"""Run configuration: one JSON file, overridable from the command line."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .generate import SamplerConfig
from .metrics import DEFAULT_PATTERN_SIZES
from .score import DEFAULT_CAP_QUARTERS
from .training import TrainConfig


@dataclass
class PreprocessConfig:
    cap_quarters: int = DEFAULT_CAP_QUARTERS
    # extend the pitch table with every in-range transposition
    augment_pitch: bool = True


@dataclass
class EvalConfig:
    pattern_sizes: tuple[int, ...] = DEFAULT_PATTERN_SIZES
    bootstrap_fraction: float = 0.5
    bootstrap_repetitions: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    variant: str = "bachprop"
    hidden: int | list[int] | None = None  # None: variant default
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SamplerConfig = field(default_factory=SamplerConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["evaluate"]["pattern_sizes"] = list(self.evaluate.pattern_sizes)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> RunConfig:
        return _build(cls, raw)

    def with_seed(self, seed: int) -> RunConfig:
        """Route a single seed to every section that consumes randomness."""
        return dataclasses.replace(self, seed=seed, train=dataclasses.replace(self.train, seed=seed),
                                   sample=dataclasses.replace(self.sample, seed=seed))


def _build(cls, raw: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in raw.items():
        default = getattr(cls(), name) if name in known else None
        if dataclasses.is_dataclass(default) and isinstance(value, dict):
            value = _build(type(default), value)
        elif name == "pattern_sizes":
            value = tuple(int(v) for v in value)
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def provenance(config: RunConfig, command: str) -> dict:
    return {"tool": "bachprop", "version": __version__, "command": command, "config": config.to_dict()}
