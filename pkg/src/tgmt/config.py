"""Run configuration: a flat INI document ([section] headers, key = value,
`#` comment lines) with strict unknown-key rejection.

All paths are resolved relative to the config file's directory. The
effective configuration (defaults filled in, paths absolutized) can be
re-serialized; re-running from the echoed file reproduces the run.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .network import TrainConfig, TrunkSpec
from .optim import SgdConfig
from .synth import WorldConfig
from .video import CropConfig


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_int_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(tok.strip()) for tok in text.split(","))


def _parse_float_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(tok.strip()) for tok in text.split(","))


def _parse_m(text: str):
    text = text.strip()
    if text == "auto":
        return "auto"
    value = int(text)
    if value < 0:
        raise ValueError(f"m must be >= 0 or auto, got {value}")
    return value


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        # repr is the shortest exact round-trip form
        return repr(value)
    return str(value)


# section -> key -> (parser, default). "path" entries get resolved against
# the config file's directory; empty string means unset.
_SCHEMA = {
    "run": {
        "seed": (_parse_int, 0),
    },
    "world": {
        "activities": (_parse_int, 5),
        "objects": (_parse_int, 20),
        "relevant_per_activity": (_parse_int, 2),
        "latent_dim": (_parse_int, 8),
        "frame_size": (_parse_int, 16),
        "channels": (_parse_int, 1),
        "frames_per_clip": (_parse_int, 12),
        "train_clips_per_activity": (_parse_int, 30),
        "test_clips_per_activity": (_parse_int, 30),
        "train_images_per_object": (_parse_int, 50),
        "test_images_per_object": (_parse_int, 10),
        "noise_std": (_parse_float, 0.5),
        "embed_dim": (_parse_int, 16),
        "template_amplitude": (_parse_float, 2.0),
    },
    "train": {
        "strategy": (_parse_str, "text_guided"),
        "batch_size": (_parse_int, 16),
        "segment_count": (_parse_int, 3),
        "iterations": (_parse_int, 400),
        "lr": (_parse_float, 0.05),
        "weight_decay": (_parse_float, 1e-4),
        "milestones": (_parse_int_list, ()),
        "divisors": (_parse_float_list, ()),
        "pretrain_iterations": (_parse_int, 300),
        "pretrain_lr": (_parse_float, 0.0),  # 0 means: use lr
        "dropout_rate": (_parse_float, 0.25),
        "eval_every": (_parse_int, 0),
        "trunk_channels": (_parse_int_list, (8, 16)),
        "fc_width": (_parse_int, 64),
    },
    "crop": {
        "min_side": (_parse_int, 10),
        "max_side": (_parse_int, 16),
        "output_size": (_parse_int, 12),
    },
    "tra": {
        "m": (_parse_m, "auto"),
        "top_k": (_parse_int, 3),
        "activities_file": (_parse_str, ""),
        "objects_file": (_parse_str, ""),
        "embeddings_file": (_parse_str, ""),
        "embeddings_format": (_parse_str, "binary"),
    },
    "protocol": {
        "eval_frames": (_parse_int, 25),
        "protocol": (_parse_str, "full"),
    },
    "experiment": {
        "seeds": (_parse_int, 10),
    },
}

_PATH_KEYS = {("tra", "activities_file"), ("tra", "objects_file"),
              ("tra", "embeddings_file")}
_CHOICES = {
    ("train", "strategy"): ("baseline", "object_incorporated", "text_guided"),
    ("protocol", "protocol"): ("full", "single_frame"),
    ("tra", "embeddings_format"): ("binary", "text"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    def world_config(self, seed=None) -> WorldConfig:
        keys = {f.name for f in fields(WorldConfig)} - {"seed"}
        kwargs = {k: self.get("world", k) for k in keys}
        return WorldConfig(seed=self.seed if seed is None else seed, **kwargs)

    def crop_config(self) -> CropConfig:
        return CropConfig(self.get("crop", "min_side"),
                          self.get("crop", "max_side"),
                          self.get("crop", "output_size"))

    def trunk_spec(self) -> TrunkSpec:
        return TrunkSpec(in_channels=self.get("world", "channels"),
                         channels=self.get("train", "trunk_channels"),
                         fc_width=self.get("train", "fc_width"))

    def train_config(self, refined_ids=None, strategy=None,
                     seed=None) -> TrainConfig:
        g = lambda k: self.get("train", k)
        lr = g("lr")
        pre_lr = g("pretrain_lr") or lr
        return TrainConfig(
            strategy=strategy or g("strategy"),
            batch_size=g("batch_size"),
            segment_count=g("segment_count"),
            sgd=SgdConfig(lr=lr, weight_decay=g("weight_decay"),
                          milestones=g("milestones"), divisors=g("divisors"),
                          total_iterations=g("iterations")),
            pretrain=SgdConfig(lr=pre_lr, weight_decay=g("weight_decay"),
                               total_iterations=g("pretrain_iterations")),
            dropout_rate=g("dropout_rate"),
            seed=self.seed if seed is None else seed,
            crop=self.crop_config(),
            trunk=self.trunk_spec(),
            refined_ids=refined_ids,
            eval_every=g("eval_every"),
        )

    def resolve_m(self, object_count: int) -> int:
        m = self.get("tra", "m")
        return object_count // 2 if m == "auto" else m


def default_config() -> RunConfig:
    values = {}
    for section, keys in _SCHEMA.items():
        for key, (_, default) in keys.items():
            values[(section, key)] = default
    return RunConfig(values)


def parse_config(path=None, seed_override=None) -> RunConfig:
    """Read an INI file into a RunConfig; None gives pure defaults."""
    rc = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"bad config syntax in {path}: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                parse = _SCHEMA[section][key][0]
                try:
                    value = parse(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for [{section}] {key}: {raw!r} ({exc})"
                    ) from exc
                if (section, key) in _PATH_KEYS and value:
                    value = os.path.normpath(os.path.join(base, value))
                rc.values[(section, key)] = value
    for (section, key), choices in _CHOICES.items():
        if rc.values[(section, key)] not in choices:
            raise ConfigError(
                f"[{section}] {key} must be one of {choices}, "
                f"got {rc.values[(section, key)]!r}"
            )
    if seed_override is not None:
        rc.values[("run", "seed")] = int(seed_override)
    return rc


def effective_text(rc: RunConfig) -> str:
    """Canonical INI rendering of the full effective configuration."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_fmt(rc.values[(section, key)])}")
        lines.append("")
    return "\n".join(lines)


def write_effective(rc: RunConfig, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "effective.ini")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(effective_text(rc))
    return path
