"""Experiment configuration files.

INI-style `key = value` lines under [synth], [ce] and [train] sections.
Unknown sections or keys are rejected, and every section must spell out its
seed explicitly; nothing is seeded from the clock.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path as FsPath

from .lattice import LatticeError
from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_SYNTH_TYPES = {
    "vocab_size": int,
    "max_sentence_len": int,
    "frames": int,
    "feature_dim": int,
    "noise": float,
    "num_train": int,
    "num_heldout": int,
    "enum_cap": int,
    "self_loop_prob": float,
    "template_scale": float,
    "seed": int,
}

_CE_TYPES = {
    "iterations": int,
    "learning_rate": float,
    "seed": int,
}

_TRAIN_TYPES = {
    "mode": str,
    "numerator": str,
    "k": int,
    "learning_rate": float,
    "iterations": int,
    "epoch_size": int,
    "seed": int,
}

_CE_DEFAULTS = {"iterations": 60, "learning_rate": 0.5}


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig
    ce_iterations: int
    ce_learning_rate: float
    ce_seed: int
    train: TrainConfig

    @classmethod
    def load(cls, path: str | FsPath) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        text = FsPath(path).read_text(encoding="utf-8")
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        return cls.from_parser(parser, source=str(path))

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, source: str = "<config>") -> "ExperimentConfig":
        known = {"synth": _SYNTH_TYPES, "ce": _CE_TYPES, "train": _TRAIN_TYPES}
        for section in parser.sections():
            if section not in known:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key in parser[section]:
                if key not in known[section]:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
        for section in known:
            if not parser.has_section(section):
                raise ConfigError(f"{source}: missing section [{section}]")
            if "seed" not in parser[section]:
                raise ConfigError(f"{source}: [{section}] must set an explicit seed")

        def coerce(section: str, types: dict) -> dict:
            out = {}
            for key, value in parser[section].items():
                try:
                    out[key] = types[key](value)
                except ValueError:
                    raise ConfigError(
                        f"{source}: [{section}] {key} = {value!r} is not a valid {types[key].__name__}"
                    ) from None
            return out

        synth_kwargs = coerce("synth", _SYNTH_TYPES)
        ce_kwargs = {**_CE_DEFAULTS, **coerce("ce", _CE_TYPES)}
        train_kwargs = coerce("train", _TRAIN_TYPES)
        try:
            synth = SynthConfig(**synth_kwargs)
            train = TrainConfig(**train_kwargs)
        except LatticeError as e:
            raise ConfigError(f"{source}: {e}") from None
        return cls(synth=synth, ce_iterations=ce_kwargs["iterations"],
                   ce_learning_rate=ce_kwargs["learning_rate"], ce_seed=ce_kwargs["seed"],
                   train=train)

    def replace_train(self, **kwargs) -> "ExperimentConfig":
        merged = {f.name: getattr(self.train, f.name) for f in fields(TrainConfig)}
        merged.update(kwargs)
        return ExperimentConfig(synth=self.synth, ce_iterations=self.ce_iterations,
                                ce_learning_rate=self.ce_learning_rate, ce_seed=self.ce_seed,
                                train=TrainConfig(**merged))


def default_config_text() -> str:
    """A ready-to-run toy configuration (also used by the verify suites)."""
    return """\
# latmmi toy experiment
[synth]
vocab_size = 3
max_sentence_len = 2
frames = 8
feature_dim = 4
noise = 1.5
num_train = 24
num_heldout = 24
enum_cap = 1000000
self_loop_prob = 0.5
template_scale = 1.0
seed = 0

[ce]
iterations = 60
learning_rate = 0.5
seed = 0

[train]
mode = otf
numerator = fixed
k = 6
learning_rate = 0.6
iterations = 500
epoch_size = 0
seed = 0
"""
