"""Sweeps, ablations and CSV exports built on ``fit`` and ``linear_eval``."""
from __future__ import annotations

import io
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import augment as A
from .bregman import deep_divergence
from .config import ModelSpec, TrainConfig, augment_spec
from .data import Dataset
from .losses import SimilarityKernel
from .model import ContrastiveDivergenceModel
from .nn import ParamGraph, grad_check, seeded_rng
from .tensor import Tensor
from .train import combined, compute_losses, fit, linear_eval, representations


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                           for v in row) + "\n")
    return buf.getvalue()


def train_and_probe(dataset: Dataset, cfg: TrainConfig) -> float:
    model = ContrastiveDivergenceModel.from_config(dataset.input_dim, cfg)
    fit(model, dataset, cfg)
    return linear_eval(model.encoder, dataset, cfg.probe).top1


def sweep_kappa(dataset: Dataset, cfg: TrainConfig, kappa_values: Sequence[int]) -> list[tuple[int, float]]:
    """One run per kappa with the shared seed; returns ``(kappa, top1)`` rows."""
    if len(set(kappa_values)) < 2:
        raise ValueError("sweep_kappa needs at least two distinct kappa values")
    return [(int(k), train_and_probe(dataset, replace(cfg, model=replace(cfg.model, kappa=int(k)))))
            for k in kappa_values]


def ablate_augmentations(dataset: Dataset, cfg: TrainConfig,
                         stages: Sequence[str]) -> list[tuple[str, float, float]]:
    """Baseline run plus one run per removed stage: ``(stage, top1, delta vs baseline)``."""
    for s in stages:
        if s not in A.STAGES:
            raise ValueError(f"unknown augmentation stage {s!r}; choose from {A.STAGES}")
    base_spec = augment_spec(cfg, dataset.is_vector)

    def run(spec: A.AugmentSpec) -> float:
        overrides = {f"{stage}.{f}": v for stage in A.STAGES
                     for f, v in vars(getattr(spec, stage)).items()}
        return train_and_probe(dataset, replace(cfg, augment="none", augment_overrides=overrides))

    base = run(base_spec)
    rows = [("baseline", base, 0.0)]
    for s in stages:
        acc = run(A.drop_stage(base_spec, s))
        rows.append((s, acc, acc - base))
    return rows


def _outputs(model: ContrastiveDivergenceModel, x: np.ndarray) -> np.ndarray:
    model.eval()
    try:
        return model.subnets(model.embed(Tensor(x))).data
    finally:
        model.train()


def export_divergence_grid(model: ContrastiveDivergenceModel, anchor, x_range=(0.0, 1.0),
                           y_range=(0.0, 1.0), resolution: int = 50, dims=(0, 1),
                           base=None) -> list[tuple[float, float, float]]:
    """Deep divergence from every grid point to ``anchor`` (inference mode).

    The grid spans input coordinates ``dims``; other coordinates come from
    ``base`` (default: the anchor itself).
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    anchor = np.asarray(anchor, dtype=np.float64).reshape(-1)
    if anchor.size != model.input_dim:
        raise ValueError(f"anchor has {anchor.size} coordinates, model expects {model.input_dim}")
    base = anchor if base is None else np.asarray(base, dtype=np.float64).reshape(-1)
    xs = np.linspace(*x_range, resolution)
    ys = np.linspace(*y_range, resolution)
    o_anchor = _outputs(model, anchor[None])
    rows = []
    for y in ys:
        pts = np.repeat(base[None], resolution, axis=0)
        pts[:, dims[0]] = xs
        pts[:, dims[1]] = y
        o = _outputs(model, pts)
        # each grid row against the single anchor row: column 0 of the n x 1 matrix
        d = deep_divergence(Tensor(o), Tensor(o_anchor)).data[:, 0]
        rows.extend((float(x), float(y), float(v)) for x, v in zip(xs, d))
    return rows


def export_embeddings(model_or_encoder, dataset: Dataset, which: str = "encoder") -> str:
    """CSV ``id,label,e0..`` of encoder or projection outputs in dataset order."""
    if which not in ("encoder", "projection"):
        raise ValueError(f"which must be 'encoder' or 'projection', got {which!r}")
    if which == "projection":
        if not isinstance(model_or_encoder, ContrastiveDivergenceModel):
            raise ValueError("projection embeddings need a full model checkpoint")
        model = model_or_encoder
        if dataset.input_dim != model.input_dim:
            raise ValueError(f"dataset dim {dataset.input_dim} != model input dim {model.input_dim}")
        model.eval()
        emb = model.embed(Tensor(dataset.flat())).data
        model.train()
    else:
        enc = model_or_encoder.encoder if isinstance(model_or_encoder, ContrastiveDivergenceModel) \
            else model_or_encoder
        in_dim = enc.layers[0].weight.shape[0] if enc.layers else dataset.input_dim
        if dataset.input_dim != in_dim:
            raise ValueError(f"dataset dim {dataset.input_dim} != encoder input dim {in_dim}")
        emb = representations(enc, dataset)
    labels = dataset.labels if dataset.labels is not None else np.full(len(dataset), -1)
    header = ["id", "label", *(f"e{i}" for i in range(emb.shape[1]))]
    rows = [[i, int(labels[i]), *map(float, emb[i])] for i in range(len(dataset))]
    return rows_to_csv(header, rows)


# gradient verification on a small composite model

GRAD_LOSSES = ("nt_xent", "divergence", "total")


def gradient_suite(seed: int = 0, n: int = 4, embed_dim: int = 8, kappa: int = 5,
                   losses: Sequence[str] = GRAD_LOSSES, step: float = 1e-5, tol: float = 1e-4,
                   kernel_kind: str = "gaussian", oracle_dtype=np.longdouble) -> dict:
    """Finite-difference check of every trainable parameter for each loss.

    Uses a reduced-width model (encoder 6->16->16, head 16->16->``embed_dim``,
    subnets ``embed_dim``->16->8->1) on a fixed pair of random views.
    Finite differences run in ``oracle_dtype``; see ``grad_check``.
    """
    rng = seeded_rng(seed, 0x6C)
    x1, x2 = rng.uniform(0, 1, (n, 6)), rng.uniform(0, 1, (n, 6))
    reports = {}
    for name in losses:
        spec = ModelSpec(encoder=(16, 16), projection_hidden=16, embed_dim=embed_dim, kappa=kappa,
                         subnet_widths=(16, 8),
                         use_contrastive_loss=name in ("nt_xent", "total"),
                         use_divergence_loss=name in ("divergence", "total"))
        cfg = TrainConfig(model=spec, seed=seed, kernel=SimilarityKernel(kernel_kind))
        model = ContrastiveDivergenceModel.from_config(6, cfg)
        # check every parameter, including subnets when their loss is off
        params: ParamGraph = model.params
        params.set_trainable("subnets", True)

        def f():
            return combined(*compute_losses(model, Tensor(x1), Tensor(x2), cfg))

        reports[name] = grad_check(f, params, step=step, tol=tol, oracle_dtype=oracle_dtype)
    return reports

