"""INI run configuration: parse and validate everything before any work starts.

Sections and their keys mirror the config dataclasses::

    [run]      seed, train_data, val_data, val_count, val_seed, holdout, init_from
    [encoder]  EncoderConfig fields
    [model]    DecoderConfig fields
    [train]    TrainConfig fields
    [data]     GenConfig fields (corpus_path, span_len, layout_weights, fonts, ...)
    [render]   RenderConfig fields
    [augment]  enabled plus AugmentConfig fields

Tuples are comma separated (``canvas = 256, 512``); ``none`` clears an
optional value. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError, PageHTRError
from .model import ModelConfig
from .synth.augment import AugmentConfig
from .synth.render import RenderConfig
from .synth.sources import GenConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    train_data: str | None = None   # dataset directory; generated on the fly when unset
    val_data: str | None = None     # dataset directory; generated from held-out text when unset
    val_count: int = 200
    val_seed: int = 12345
    holdout: float = 0.1            # corpus fraction reserved for validation text
    init_from: str | None = None    # checkpoint whose weights start the run (architecture must match)


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: GenConfig = field(default_factory=GenConfig)

    def validate(self):
        f = self.model.encoder.downsample_factor
        H, W = self.train.canvas
        if H % f or W % f:
            raise ConfigError(f"train.canvas {H}x{W} not divisible by encoder downsample factor {f}")
        if self.model.d_model % 4:
            raise ConfigError(f"model.d_model={self.model.d_model} must be divisible by 4")
        if tuple(self.data.canvas) != tuple(self.train.canvas):
            raise ConfigError("data.canvas must equal train.canvas")
        if not 0.0 < self.run.holdout < 1.0:
            raise ConfigError("run.holdout must be in (0, 1)")
        if self.run.val_count < 1:
            raise ConfigError("run.val_count must be >= 1")
        for name in ("train_data", "val_data"):
            p = getattr(self.run, name)
            if p is not None and not Path(p).is_dir():
                raise ConfigError(f"run.{name}={p} is not a directory")
        if self.run.init_from is not None and not Path(self.run.init_from).is_file():
            raise ConfigError(f"run.init_from={self.run.init_from} is not a file")
        if self.data.corpus_path is not None and not Path(self.data.corpus_path).is_file():
            raise ConfigError(f"data.corpus_path={self.data.corpus_path} is not a file")
        return self

    def to_text(self) -> str:
        """Canonical INI text; ``load_config_text(cfg.to_text()) == cfg``."""
        cp = configparser.ConfigParser(interpolation=None)
        sections = _sections(self)
        for name, obj in sections.items():
            if name == "augment":
                cp[name] = {"enabled": _fmt(obj is not None)}
                if obj is None:
                    continue
            cp[name] = {**(cp[name] if name in cp else {}), **{
                f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not _nested(getattr(obj, f.name), f.name)}}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SUBSECTIONS = ("render", "augment")  # GenConfig fields carried by their own sections


def _nested(v, name=""):
    return dataclasses.is_dataclass(v) or name in _SUBSECTIONS


def _sections(cfg: RunConfig):
    return {"run": cfg.run, "encoder": cfg.model.encoder, "model": cfg.model.decoder,
            "train": cfg.train, "data": cfg.data, "render": cfg.data.render,
            "augment": cfg.data.augment}


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# types for fields whose default does not reveal them
_OPTIONAL = {("train", "val_max_len"): int, ("train", "stop_score"): float, ("run", "train_data"): str, ("run", "val_data"): str,
             ("data", "corpus_path"): str, ("run", "init_from"): str}
_NESTED_TUPLES = {("render", "empty_size")}
_STR_TUPLES = {("data", "fonts")}
_VAR_INT_TUPLES = {("encoder", "widths"), ("encoder", "depths"), ("encoder", "stage_strides")}


def _coerce(section, key, raw: str, default):
    raw = raw.strip()
    try:
        if (section, key) in _OPTIONAL:
            if raw.lower() == "none" or raw == "":
                return None
            return _OPTIONAL[(section, key)](raw)
        if (section, key) in _NESTED_TUPLES:
            nums = [float(x) if "." in x else int(x) for x in raw.split(",")]
            if len(nums) != 4:
                raise ValueError("expected four numbers")
            return (tuple(nums[:2]), tuple(nums[2:]))
        if (section, key) in _VAR_INT_TUPLES:
            return tuple(int(x) for x in raw.split(","))
        if (section, key) in _STR_TUPLES:
            items = tuple(x.strip() for x in raw.split(",") if x.strip())
            return items
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError("expected a boolean")
            return low in ("true", "yes", "1", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [x.strip() for x in raw.split(",")]
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated values")
            return tuple(float(p) if isinstance(d, float) else int(p) for p, d in zip(parts, default))
        if isinstance(default, str):
            return raw
    except ValueError as e:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {e}") from None
    raise ConfigError(f"[{section}] {key}: unsupported field type")


def _build(cls, section, values: dict, base=None):
    base = base if base is not None else cls()
    names = {f.name: f for f in dataclasses.fields(cls) if not _nested(getattr(base, f.name), f.name)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key}; known: {sorted(names)}")
        kwargs[key] = _coerce(section, key, raw, getattr(base, key))
    try:
        return dataclasses.replace(base, **kwargs)
    except (PageHTRError, TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"[{section}] {e}") from None


_KNOWN = ("run", "encoder", "model", "train", "data", "render", "augment")


def load_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    for s in cp.sections():
        if s not in _KNOWN:
            raise ConfigError(f"unknown section [{s}]; known: {list(_KNOWN)}")
    sec = {s: dict(cp[s]) if cp.has_section(s) else {} for s in _KNOWN}
    run = _build(RunSettings, "run", sec["run"])
    encoder = _build(EncoderConfig, "encoder", sec["encoder"])
    decoder = _build(DecoderConfig, "model", sec["model"])
    train = _build(TrainConfig, "train", sec["train"])
    render = _build(RenderConfig, "render", sec["render"])
    aug_vals = dict(sec["augment"])
    enabled = _coerce("augment", "enabled", aug_vals.pop("enabled", "false"), False)
    augment = _build(AugmentConfig, "augment", aug_vals) if enabled else None
    if not enabled and aug_vals:
        raise ConfigError("[augment] keys given but enabled = false")
    data_vals = dict(sec["data"])
    data_vals.setdefault("canvas", _fmt(train.canvas))
    try:
        base = GenConfig(render=render, augment=augment)
    except PageHTRError as e:
        raise ConfigError(f"[data] {e}") from None
    data = _build(GenConfig, "data", data_vals, base)
    try:
        model = ModelConfig(encoder, decoder)
    except PageHTRError as e:
        raise ConfigError(str(e)) from None
    return RunConfig(run, model, train, data).validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return load_config_text(text)
