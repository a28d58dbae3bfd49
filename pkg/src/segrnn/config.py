"""Run configuration files.

INI-style ``key = value`` sections; every key has a default and unknown
sections or keys are rejected::

    [encoder]
    num_layers = 3
    hidden = 128
    subsample_after = 1
    subsample_mode = skip
    window = 2
    proj_dim = 64

    [features]
    emb_dim = 32
    d_h = 64
    d_w = 64
    d_dur = 8
    use_duration = true

    [clamp]
    frames = 30

    [train]
    lr_init = 0.1
    decay_factor = 2.0
    max_epochs = 30
    patience = 1
    min_lr =              ; empty means lr_init / 1024
    dropout_rate = 0.2
    seed = 0
    batch_size = 1
    clip_norm = 5.0

    [data]
    train =
    valid =

A ``preset = small|large`` key in an optional ``[run]`` section selects the
defaults the remaining keys override.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .encoder import EncoderConfig
from .model import FeatureConfig, ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_manifest: str | None = None
    valid_manifest: str | None = None

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))

    def model_config(self) -> ModelConfig:
        """Model config carrying the training dropout rate."""
        return replace(self.model, encoder=replace(self.model.encoder, dropout_rate=self.train.dropout_rate))


PRESETS: dict[str, RunConfig] = {
    "small": RunConfig(),
    "large": RunConfig(
        model=ModelConfig(encoder=EncoderConfig(num_layers=6, hidden=250, subsample_after=(1, 2)))
    ),
}


def preset(name: str, subsample_mode: str | None = None) -> RunConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if subsample_mode is not None:
        enc = replace(cfg.model.encoder, subsample_mode=subsample_mode)
        cfg = replace(cfg, model=replace(cfg.model, encoder=enc))
    return cfg


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _convert(kind, text: str):
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind == "ints":
        return _parse_ints(text)
    if kind == "optfloat":
        return None if not text.strip() else float(text)
    if kind == "optstr":
        return text.strip() or None
    return text.strip()


_ENCODER_KEYS = {
    "num_layers": int,
    "hidden": int,
    "subsample_after": "ints",
    "subsample_mode": str,
    "window": int,
    "proj_dim": int,
}
_FEATURE_KEYS = {"emb_dim": int, "d_h": int, "d_w": int, "d_dur": int, "use_duration": bool}
_TRAIN_KEYS = {
    "lr_init": float,
    "decay_factor": float,
    "max_epochs": int,
    "patience": int,
    "min_lr": "optfloat",
    "dropout_rate": float,
    "seed": int,
    "batch_size": int,
    "clip_norm": float,
}
_DATA_KEYS = {"train": "optstr", "valid": "optstr"}
SECTIONS = {
    "run": {"preset": str},
    "encoder": _ENCODER_KEYS,
    "features": _FEATURE_KEYS,
    "clamp": {"frames": int},
    "train": _TRAIN_KEYS,
    "data": _DATA_KEYS,
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        allowed = SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                values.setdefault(section, {})[key] = _convert(allowed[key], raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None

    base = preset(values.get("run", {}).get("preset", "small"))
    try:
        enc = replace(base.model.encoder, **values.get("encoder", {}))
        feat = replace(base.model.features, **values.get("features", {}))
        clamp = values.get("clamp", {}).get("frames", base.model.clamp_frames)
        model = ModelConfig(enc, feat, clamp)
        train = replace(base.train, **values.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    data = values.get("data", {})
    return RunConfig(model, train, data.get("train"), data.get("valid"))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: RunConfig) -> str:
    """Render a config in the same format ``parse_config`` reads."""
    enc, feat, tr = cfg.model.encoder, cfg.model.features, cfg.train
    lines = ["[encoder]"]
    for key in _ENCODER_KEYS:
        v = getattr(enc, key)
        lines.append(f"{key} = {' '.join(map(str, v)) if isinstance(v, tuple) else v}")
    lines += ["", "[features]"]
    lines += [f"{key} = {str(getattr(feat, key)).lower() if key == 'use_duration' else getattr(feat, key)}" for key in _FEATURE_KEYS]
    lines += ["", "[clamp]", f"frames = {cfg.model.clamp_frames}", "", "[train]"]
    for f in fields(TrainConfig):
        v = getattr(tr, f.name)
        lines.append(f"{f.name} = {'' if v is None else v}")
    lines += ["", "[data]", f"train = {cfg.train_manifest or ''}", f"valid = {cfg.valid_manifest or ''}", ""]
    return "\n".join(lines)
