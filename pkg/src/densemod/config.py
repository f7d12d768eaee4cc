"""Flat key=value training configuration.

The on-disk format is UTF-8 text, one ``dotted.key=value`` pair per line,
``#`` comments allowed. Nested groups use the prefixes ``model.``,
``degradation.``, ``losses.``, ``adam.`` and ``schedule.``; run-level fields
are unprefixed. Interval fields take two comma-separated numbers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .degrade import DegradationSpec
from .losses import LossWeights
from .nn import ModelSpec
from .optim import Schedule


class ConfigError(ValueError):
    """Unknown key, bad value, or missing file referenced by a config."""


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec = field(
        default_factory=lambda: ModelSpec(mode="super_resolution"))
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    losses: LossWeights = field(default_factory=LossWeights.sr_defaults)
    schedule: Schedule = field(default_factory=Schedule)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    patch_size: int = 96
    iterations: int = 1000
    seed: int = 0
    data_dir: str = ""
    out_dir: str = "run"
    checkpoint_every: int = 100
    conv_backend: str = "im2col"
    fidelity_squared: bool = False
    perceptual_seed: int = 0
    perceptual_layers: tuple = (2, 4)

    def __post_init__(self):
        if self.iterations <= 0:
            raise ConfigError("iterations must be > 0")
        if self.batch_size <= 0 or self.patch_size <= 0:
            raise ConfigError("batch_size and patch_size must be > 0")
        if self.checkpoint_every <= 0:
            raise ConfigError("checkpoint_every must be > 0")
        if self.patch_size % self.model.scale:
            raise ConfigError(
                f"patch_size={self.patch_size} must be divisible by "
                f"model scale {self.model.scale}")


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_interval(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_int_tuple(text):
    return tuple(int(p.strip()) for p in text.split(",") if p.strip())


# key -> (group, field, converter); group None means a TrainConfig field
_KEYS = {
    "model.mode": ("model", "mode", str),
    "model.num_blocks": ("model", "num_blocks", int),
    "model.channels": ("model", "channels", int),
    "model.scale": ("model", "scale", int),
    "model.leaky_slope": ("model", "leaky_slope", float),
    "model.seed": ("model", "seed", int),
    "model.global_skip": ("model", "global_skip", _parse_bool),
    "degradation.mode": ("degradation", "mode", str),
    "degradation.scale": ("degradation", "scale", int),
    "degradation.jpeg_quality": ("degradation", "jpeg_quality", int),
    "degradation.fade_strength": ("degradation", "fade_strength", _parse_interval),
    "degradation.gray_level": ("degradation", "gray_level", _parse_interval),
    "degradation.saturation_shift": ("degradation", "saturation_shift", _parse_interval),
    "degradation.noise_sigma": ("degradation", "noise_sigma", _parse_interval),
    "degradation.seed": ("degradation", "seed", int),
    "losses.fidelity": ("losses", "fidelity", float),
    "losses.ssim": ("losses", "ssim", float),
    "losses.perceptual": ("losses", "perceptual", float),
    "losses.adversarial": ("losses", "adversarial", float),
    "schedule.initial_lr": ("schedule", "initial_lr", float),
    "schedule.halve_every": ("schedule", "halve_every", int),
    "schedule.num_halvings": ("schedule", "num_halvings", int),
    "adam.beta1": (None, "adam_beta1", float),
    "adam.beta2": (None, "adam_beta2", float),
    "adam.eps": (None, "adam_eps", float),
    "batch_size": (None, "batch_size", int),
    "patch_size": (None, "patch_size", int),
    "iterations": (None, "iterations", int),
    "seed": (None, "seed", int),
    "data_dir": (None, "data_dir", str),
    "out_dir": (None, "out_dir", str),
    "checkpoint_every": (None, "checkpoint_every", int),
    "conv_backend": (None, "conv_backend", str),
    "fidelity_squared": (None, "fidelity_squared", _parse_bool),
    "perceptual_seed": (None, "perceptual_seed", int),
    "perceptual_layers": (None, "perceptual_layers", _parse_int_tuple),
}


def parse_config(text):
    """Build a TrainConfig from key=value text; unknown keys are errors."""
    groups = {"model": {}, "degradation": {}, "losses": {}, "schedule": {}}
    top = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        group, name, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        if group is None:
            top[name] = parsed
        else:
            groups[group][name] = parsed
    try:
        model = ModelSpec(**{"mode": "super_resolution", **groups["model"]})
        degradation = DegradationSpec(**groups["degradation"])
        base_losses = (LossWeights.enhance_defaults()
                       if model.mode == "detail_enhance"
                       else LossWeights.sr_defaults())
        losses = replace(base_losses, **groups["losses"])
        schedule = Schedule(**groups["schedule"])
        return TrainConfig(model=model, degradation=degradation, losses=losses,
                           schedule=schedule, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    if cfg.data_dir and not os.path.isdir(cfg.data_dir):
        raise ConfigError(f"data_dir {cfg.data_dir!r} does not exist")
    return cfg


def config_text(cfg):
    """Serialize a TrainConfig back to the key=value format."""
    lines = []
    for key, (group, name, conv) in _KEYS.items():
        obj = cfg if group is None else getattr(cfg, group)
        value = getattr(obj, name)
        if conv is _parse_interval or conv is _parse_int_tuple:
            value = ",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
