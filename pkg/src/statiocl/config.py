"""Run configuration files (INI syntax) with strict key checking.

Sections ``[run] [data] [augment] [encoder] [contrast] [train] [eval]``; every
key is optional and falls back to the documented default.  Unknown sections or
keys are rejected.  Tuples are comma-separated; generator lists in ``[data]
classes`` are semicolon-separated, e.g. ``ar1(0.5, 1); random_walk(1)``.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .contrast import ContrastConfig
from .data import DEFAULT_PROPORTIONS, ConfigError, SynthSpec, format_generator
from .encoder import EncoderConfig
from .evaluate import DEFAULT_FRACTIONS
from .train import TrainConfig


@dataclass
class DataConfig:
    manifest: str = ""
    name: str = "synth"
    classes: tuple = ("ar1(phi=0.5, sigma=1.0)", "random_walk(sigma=1.0)")
    n_segments: int = 2000
    segments_per_recording: int = 50
    mean_run_length: float = 10.0
    length: int = 179
    channels: int = 1
    proportions: tuple = DEFAULT_PROPORTIONS
    stratify: bool = False

    def synth_spec(self, seed: int) -> SynthSpec:
        return SynthSpec(classes=self.classes, n_segments=self.n_segments,
                         segments_per_recording=self.segments_per_recording,
                         mean_run_length=self.mean_run_length, length=self.length, channels=self.channels,
                         seed=seed, proportions=self.proportions, stratify=self.stratify, name=self.name)


@dataclass
class EvalConfig:
    probe_epochs: int = 100
    probe_lr: float = 1e-3
    probe_weight_decay: float = 1e-4
    probe_batch_size: int = 64
    fractions: tuple = DEFAULT_FRACTIONS
    grid_betas: tuple = (8.0, 16.0, 24.0, 32.0)
    grid_thresholds: tuple = (0.0001, 0.001, 0.01, 0.05)

    def probe_kwargs(self) -> dict:
        return {"epochs": self.probe_epochs, "lr": self.probe_lr, "weight_decay": self.probe_weight_decay,
                "batch_size": self.probe_batch_size}


@dataclass
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    explicit: set = field(default_factory=set, compare=False, repr=False)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)


SECTIONS = ("data", "augment", "encoder", "contrast", "train", "eval")
# file key -> dataclass field, where the two differ
_ALIASES = {("contrast", "lambda"): "lam"}
_HIDDEN = {("train", "seed")}  # driven by [run] seed


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(section: str, key: str, default, text: str):
    text = text.strip()
    try:
        if key == "classes":
            return tuple(t.strip() for t in text.split(";") if t.strip())
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(t) for t in text.split(",") if t.strip())
        if default is None:
            return None if text.lower() in ("", "none") else int(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _file_key(section: str, name: str) -> str:
    for (sec, key), target in _ALIASES.items():
        if sec == section and target == name:
            return key
    return name


def parse_config(path=None, text: str | None = None) -> RunConfig:
    """Read a run configuration; with neither argument every default applies."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None)
    parser.optionxform = str
    try:
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            parser.read_string(path.read_text(), source=str(path))
        elif text is not None:
            parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    cfg = RunConfig()
    for section in parser.sections():
        if section == "run":
            for key, val in parser.items("run"):
                if key != "seed":
                    raise ConfigError(f"unknown key {key!r} in [run]")
                cfg.seed = _convert("run", key, 0, val)
                cfg.explicit.add(("run", "seed"))
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(target)}
        updates = {}
        for key, val in parser.items(section):
            name = _ALIASES.get((section, key), key)
            if name not in names or (section, name) in _HIDDEN:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            updates[name] = _convert(section, key, getattr(target, name), val)
            cfg.explicit.add((section, name))
        try:
            setattr(cfg, section, dataclasses.replace(target, **updates))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    return cfg


def to_ini(cfg: RunConfig) -> str:
    lines = ["[run]", f"seed = {cfg.seed}", ""]
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            if (section, f.name) in _HIDDEN:
                continue
            value = getattr(obj, f.name)
            if section == "data" and f.name == "classes":
                value = "; ".join(value if isinstance(value[0], str) else (format_generator(*c) for c in value))
                lines.append(f"classes = {value}")
                continue
            lines.append(f"{_file_key(section, f.name)} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: RunConfig) -> str:
    body = to_ini(dataclasses.replace(cfg, seed=0))
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:10]


def run_directory(out: str | Path, cfg: RunConfig) -> Path:
    return Path(out) / f"{config_hash(cfg)}-s{cfg.seed}"
