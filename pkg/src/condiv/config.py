"""Run configuration and the flat ``key = value`` config format.

Nested dataclass fields flatten to dotted keys (``kernel.sigma``,
``model.kappa``).  Augmentation settings are a preset name
(``augment.preset``) plus per-field overrides keyed by
``augment.<stage>.<field>``.
"""
from __future__ import annotations

import math
import types
import typing
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any

from . import augment as A
from .losses import KERNELS, SimilarityKernel


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ModelSpec:
    encoder: tuple[int, ...] = (256, 256)
    projection_hidden: int = 256
    embed_dim: int = 32
    kappa: int = 100
    subnet_widths: tuple[int, ...] = (128, 64)
    subnet_batch_norm: bool = False
    use_contrastive_loss: bool = True
    use_divergence_loss: bool = True


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 128
    train_fraction: float = 0.8
    topk: int = 5
    seed: int = 0


@dataclass(frozen=True)
class DataConfig:
    kind: str = "clusters"
    path: str = ""
    k: int = 2
    n_per: int = 200
    dim: int = 2
    stddev: float = 0.3
    size: int = 16
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.1
    kernel: SimilarityKernel = field(default_factory=SimilarityKernel)
    model: ModelSpec = field(default_factory=ModelSpec)
    batch_size: int = 128
    epochs: int = 30
    lr: float = 0.005
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    lr_milestones: tuple[int, ...] = ()
    lr_gamma: float = 0.1
    seed: int = 0
    divergence_temperature: float | None = None
    checkpoint_every: int = 0
    augment: str = "auto"
    augment_overrides: dict = field(default_factory=dict)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        validate(self)


def validate(cfg: TrainConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.tau > 0, f"tau must be > 0, got {cfg.tau}")
    need(cfg.model.kappa >= 1, f"model.kappa must be >= 1, got {cfg.model.kappa}")
    need(cfg.batch_size >= 2, f"batch_size must be >= 2, got {cfg.batch_size}")
    need(cfg.epochs >= 0, f"epochs must be >= 0, got {cfg.epochs}")
    need(cfg.lr > 0, f"lr must be > 0, got {cfg.lr}")
    need(0 <= cfg.beta1 < 1 and 0 <= cfg.beta2 < 1, "betas must lie in [0, 1)")
    need(cfg.weight_decay >= 0, "weight_decay must be >= 0")
    need(cfg.model.use_contrastive_loss or cfg.model.use_divergence_loss,
         "at least one of model.use_contrastive_loss / model.use_divergence_loss must be on")
    need(cfg.model.embed_dim >= 1 and cfg.model.projection_hidden >= 1, "model widths must be >= 1")
    need(all(w >= 1 for w in cfg.model.encoder + cfg.model.subnet_widths), "model widths must be >= 1")
    need(cfg.divergence_temperature is None or cfg.divergence_temperature > 0,
         "divergence_temperature must be > 0")
    need(0 < cfg.probe.train_fraction < 1, "probe.train_fraction must lie in (0, 1)")
    need(cfg.augment in ("auto", "small", "imagenet", "vector", "none"),
         f"unknown augment.preset {cfg.augment!r}")
    need(cfg.data.kind in ("clusters", "shapes"), f"unknown data.kind {cfg.data.kind!r}")
    need(cfg.kernel.kind in KERNELS, f"unknown kernel.kind {cfg.kernel.kind!r}")


def augment_spec(cfg: TrainConfig, is_vector: bool) -> A.AugmentSpec:
    name = cfg.augment
    if name == "auto":
        name = "vector" if is_vector else "small"
    spec = A.preset(name)
    for key, value in sorted(cfg.augment_overrides.items()):
        stage, attr = key.split(".")
        spec = replace(spec, **{stage: replace(getattr(spec, stage), **{attr: value})})
    return spec


# flattening

def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _flatten(obj, prefix: str = "") -> dict[str, tuple[Any, Any]]:
    """key -> (value, type) for every scalar leaf of a dataclass tree."""
    out = {}
    hints = _hints(type(obj))
    for f in fields(obj):
        value = getattr(obj, f.name)
        tp = hints[f.name]
        if f.name == "augment_overrides":
            continue
        key = "augment.preset" if (prefix == "" and f.name == "augment") else prefix + f.name
        if is_dataclass(value):
            out.update(_flatten(value, key + "."))
        else:
            out[key] = (value, tp)
    return out


def _augment_fields() -> dict[str, tuple[Any, Any]]:
    return {f"augment.{k}": v for k, v in _flatten(A.AugmentSpec()).items()}


def known_keys() -> dict[str, tuple[Any, Any]]:
    keys = _flatten(TrainConfig())
    keys.update(_augment_fields())
    return keys


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(raw: str, tp, key: str = "?"):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        if raw.lower() in ("none", "null", ""):
            return None
        return parse_value(raw, inner[0], key)
    if origin is tuple:
        parts = [p for p in raw.split(",") if p.strip()] if raw else []
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(parse_value(p, args[0], key) for p in parts)
        if len(parts) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(parse_value(p, a, key) for p, a in zip(parts, args))
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(raw)
            return v
        if tp is str:
            return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(tp, '__name__', tp)}") from None
    raise ConfigError(f"{key}: unsupported type {tp}")


def parse_config_text(text: str) -> dict[str, tuple[str, int]]:
    """``key -> (raw value, line number)``; ``#`` starts a comment."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"malformed key {key!r}", lineno)
        pairs[key] = (raw, lineno)
    return pairs


def build_config(overrides: dict[str, tuple[str, int | None]], base: TrainConfig | None = None) -> TrainConfig:
    """Apply raw string overrides (``key -> (raw, line)``) on top of ``base``."""
    base = base or TrainConfig()
    keys = known_keys()
    values: dict[str, Any] = {}
    aug: dict[str, Any] = dict(base.augment_overrides)
    for key, (raw, line) in overrides.items():
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}", line)
        try:
            value = parse_value(raw, keys[key][1], key)
        except ConfigError as err:
            raise ConfigError(str(err), line) from None
        if key.startswith("augment.") and key != "augment.preset":
            aug[key[len("augment."):]] = value
        else:
            values[key] = value
    cfg = base
    for key, value in values.items():
        path = ["augment"] if key == "augment.preset" else key.split(".")
        cfg = _set_path_unchecked(cfg, path, value)
    cfg = _set_path_unchecked(cfg, ["augment_overrides"], aug)
    validate(cfg)
    try:
        augment_spec(cfg, is_vector=False)
        augment_spec(cfg, is_vector=True)
        SimilarityKernel(cfg.kernel.kind, cfg.kernel.sigma, cfg.kernel.alpha)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return cfg


def _set_path_unchecked(obj, path: list[str], value):
    # frozen dataclasses; skip __post_init__ so cross-field checks run once at the end
    if len(path) == 1:
        out = object.__new__(type(obj))
        for f in fields(obj):
            object.__setattr__(out, f.name, value if f.name == path[0] else getattr(obj, f.name))
        return out
    return _set_path_unchecked(obj, [path[0]], _set_path_unchecked(getattr(obj, path[0]), path[1:], value))


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path) as fh:
        return build_config(parse_config_text(fh.read()), base)


def dump_config(cfg: TrainConfig, resolved_augment: A.AugmentSpec | None = None) -> str:
    """Every key with its effective value, one per line, sorted."""
    flat = {k: v for k, (v, _) in _flatten(cfg).items()}
    if resolved_augment is not None:
        flat.update({f"augment.{k}": v for k, (v, _) in _flatten(resolved_augment).items()})
    else:
        flat.update({f"augment.{k}": v for k, v in cfg.augment_overrides.items()})
    return "".join(f"{k} = {format_value(flat[k])}\n" for k in sorted(flat))
