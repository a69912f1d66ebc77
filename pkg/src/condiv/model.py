"""Encoder -> projection head -> kappa subnetworks, and its checkpoint I/O."""
from __future__ import annotations

import json
from os import PathLike

import numpy as np

from . import tensor as T
from .bregman import DeepDivergenceNet
from .checkpoint import load_sections, save_sections
from .config import ModelSpec, TrainConfig, build_config, dump_config, parse_config_text
from .nn import MLP, AdamState, BatchNorm1d, Linear, Module, ParamGraph, seeded_rng
from .tensor import Tensor

INIT_STREAM = 0x1417


class ProjectionHead(Module):
    """linear -> batch norm -> ReLU -> linear."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(d_in, hidden, rng)
        self.bn = BatchNorm1d(hidden)
        self.fc2 = Linear(hidden, d_out, rng)
        self.params.extend("fc1", self.fc1.params)
        self.params.extend("bn", self.bn.params)
        self.params.extend("fc2", self.fc2.params)

    def __call__(self, h: Tensor) -> Tensor:
        return self.fc2(T.relu(self.bn(self.fc1(h))))


class Encoder(MLP):
    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim != 2:
            x = T.reshape(x, (x.shape[0], -1))
        return super().__call__(x)


class ContrastiveDivergenceModel(Module):
    def __init__(self, input_dim: int, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.input_dim, self.spec = input_dim, spec
        self.encoder = Encoder([input_dim, *spec.encoder], rng)
        rep_dim = self.encoder.out_dim or input_dim
        self.projection = ProjectionHead(rep_dim, spec.projection_hidden, spec.embed_dim, rng)
        self.subnets = DeepDivergenceNet(spec.embed_dim, spec.kappa, rng, spec.subnet_widths,
                                         spec.subnet_batch_norm)
        self.params = ParamGraph()
        self.params.extend("encoder", self.encoder.params)
        self.params.extend("projection", self.projection.params)
        self.params.extend("subnets", self.subnets.params)
        if not spec.use_divergence_loss:
            self.params.set_trainable("subnets", False)
        self.optim: AdamState | None = None

    @classmethod
    def from_config(cls, input_dim: int, cfg: TrainConfig) -> ContrastiveDivergenceModel:
        return cls(input_dim, cfg.model, seeded_rng(cfg.seed, INIT_STREAM))

    def embed(self, x) -> Tensor:
        return self.projection(self.encoder(x))


def model_sections(model: ContrastiveDivergenceModel, cfg: TrainConfig, encoder_only: bool = False,
                   extra: dict | None = None) -> dict:
    prefix = "encoder." if encoder_only else ""
    sections = {f"param/{k}": v for k, v in model.params.state(prefix).items()}
    meta = {"input_dim": model.input_dim, "encoder_only": encoder_only}
    meta.update((extra or {}).get("meta", {}))
    sections["config"] = dump_config(cfg).encode()
    sections["meta"] = json.dumps(meta, sort_keys=True).encode()
    if not encoder_only and model.optim is not None:
        st = model.optim
        sections["adam/step"] = np.array([st.step], dtype=np.int64)
        sections["adam/hyper"] = np.array([st.lr, st.beta1, st.beta2, st.weight_decay, st.eps])
        for name in st.m:
            sections[f"adam/m/{name}"] = st.m[name]
            sections[f"adam/v/{name}"] = st.v[name]
    for key, value in (extra or {}).items():
        if key != "meta":
            sections[key] = value
    return sections


def save_model(path: str | PathLike, model: ContrastiveDivergenceModel, cfg: TrainConfig,
               encoder_only: bool = False, extra: dict | None = None) -> None:
    save_sections(path, model_sections(model, cfg, encoder_only, extra))


def _config_from(sections) -> TrainConfig:
    return build_config(parse_config_text(sections["config"].decode()))


def load_model(path: str | PathLike) -> tuple[ContrastiveDivergenceModel, TrainConfig, dict]:
    """Rebuild a full model (and optimizer state, if saved) from a checkpoint."""
    sections = load_sections(path)
    meta = json.loads(sections["meta"].decode())
    if meta.get("encoder_only"):
        raise ValueError(f"{path} is an encoder-only checkpoint; a full checkpoint is required")
    cfg = _config_from(sections)
    model = ContrastiveDivergenceModel.from_config(meta["input_dim"], cfg)
    model.params.load_state({k[len("param/"):]: v for k, v in sections.items() if k.startswith("param/")})
    if "adam/step" in sections:
        lr, b1, b2, wd, eps = sections["adam/hyper"].tolist()
        st = AdamState(lr, b1, b2, wd, eps, int(sections["adam/step"][0]))
        for k, v in sections.items():
            if k.startswith("adam/m/"):
                st.m[k[len("adam/m/"):]] = v.copy()
            elif k.startswith("adam/v/"):
                st.v[k[len("adam/v/"):]] = v.copy()
        model.optim = st
    return model, cfg, sections


def load_encoder(path: str | PathLike) -> tuple[Encoder, TrainConfig]:
    sections = load_sections(path)
    meta = json.loads(sections["meta"].decode())
    cfg = _config_from(sections)
    enc = Encoder([meta["input_dim"], *cfg.model.encoder], seeded_rng(0))
    state = {k[len("param/encoder."):]: v for k, v in sections.items() if k.startswith("param/encoder.")}
    enc.params.load_state(state)
    return enc, cfg
