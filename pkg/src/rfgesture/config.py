"""Experiment configuration: one YAML file plus ``section.key=value`` overrides.

Top-level layout::

    seed: 42            # synthesis, split and training seed
    synth:      {subjects, reps, distance_m, environment, preset,
                 channel: {...}, dropout: {...}, trajectory: {...}}
    pipeline:   {l_rs, epsilon, interpolate, clip_rss_edges, impute, nu,
                 max_missing, on_exhausted, k, smoothing: {...}}
    model:      {hidden_dim, layer_count, aggregation}
    train:      {epochs, batch_size, learning_rate, momentum, weight_decay}
    eval:       {split, test_fraction, backend, ablations, sweep}

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import yaml

from .evaluate import LOPO, WITHIN_SUBJECT, SplitSpec
from .gnn import ModelConfig, TrainConfig
from .pipeline import PipelineConfig
from .preprocess import SmoothingConfig
from .synth import PRESETS, ChannelConfig, DropoutConfig, TrajectoryModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSettings:
    subjects: int = 5
    reps: int = 20
    distance_m: float = 3.0
    environment: str = "A"
    preset: str = "separable"
    channel: ChannelConfig = PRESETS["separable"][1]
    dropout: DropoutConfig = DropoutConfig()
    trajectory: TrajectoryModel = PRESETS["separable"][0]


@dataclass(frozen=True)
class EvalSettings:
    split: str = WITHIN_SUBJECT
    test_fraction: float = 0.2
    backend: str | None = None
    ablations: tuple = ((3, 4, 7, 8), (1, 2, 5, 6))
    sweep: dict = field(default_factory=lambda: {"nu": [10, 20, 30], "l_rs": [10, 20, 30, 40]})


@dataclass(frozen=True)
class Config:
    seed: int = 42
    synth: SynthSettings = SynthSettings()
    pipeline: PipelineConfig = PipelineConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalSettings = EvalSettings()

    def split_spec(self, held_out_subject: int | None = None) -> SplitSpec:
        if self.eval.split == LOPO:
            return SplitSpec(LOPO, held_out_subject=held_out_subject, seed=self.seed)
        return SplitSpec(WITHIN_SUBJECT, test_fraction=self.eval.test_fraction, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


def _build(cls, data: dict | None, where: str, base=None):
    """Instantiate dataclass ``cls`` from ``data`` on top of ``base`` (or defaults)."""
    base = base if base is not None else cls()
    if data is None:
        return base
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    changes = {}
    for key, value in data.items():
        current = getattr(base, key)
        if hasattr(current, "__dataclass_fields__"):
            changes[key] = _build(type(current), value, f"{where}.{key}", current)
        elif isinstance(current, dict):
            changes[key] = dict(value)
        else:
            changes[key] = _tuplify(value)
    try:
        return replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _set_path(tree: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted}: {k} is not a section")
    node[keys[-1]] = value


def parse_overrides(items: Sequence[str]) -> dict:
    """``["train.epochs=5", "model.aggregation=sum"]`` to a nested mapping."""
    tree: dict = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        _set_path(tree, key.strip(), yaml.safe_load(raw))
    return tree


def _merge(a: dict, b: dict) -> dict:
    out = copy.deepcopy(a)
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict | None) -> Config:
    data = dict(data or {})
    synth = data.get("synth") or {}
    preset = synth.get("preset", SynthSettings.preset)
    if preset not in PRESETS:
        raise ConfigError(f"synth.preset: unknown preset {preset!r}, choose from {sorted(PRESETS)}")
    traj_base, ch_base = PRESETS[preset]
    base = Config(synth=SynthSettings(preset=preset, trajectory=traj_base, channel=ch_base))
    return _build(Config, data, "config", base)


def load_config(path=None, overrides: Sequence[str] = ()) -> Config:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(_merge(data, parse_overrides(overrides)))


def dump_config(cfg: Config, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
