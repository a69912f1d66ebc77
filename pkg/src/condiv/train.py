"""Training loop, training log and the linear-evaluation probe."""
from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from . import tensor as T
from .augment import AugmentSpec, augment_batch
from .bregman import deep_divergence
from .config import ProbeConfig, TrainConfig, augment_spec
from .data import BatchPlan, Dataset, epoch_batches
from .losses import LossBreakdown, apply_kernel, divergence_loss, nt_xent, total_loss
from .model import ContrastiveDivergenceModel, Encoder, load_model, save_model
from .nn import AdamState, Linear, adam_step, seeded_rng
from .tensor import Tensor, TensorError

log = logging.getLogger(__name__)

STEP_STREAM = 0x57E9
LOG_FIELDS = ("step", "epoch", "contrastive", "divergence", "total")


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int, step: int, checkpoint: str | None = None):
        self.epoch, self.step, self.checkpoint = epoch, step, checkpoint
        where = f"epoch {epoch}, step {step}"
        keep = f"; last good checkpoint: {checkpoint}" if checkpoint else ""
        super().__init__(f"{where}: {message}{keep}")


def compute_losses(model: ContrastiveDivergenceModel, x1, x2, cfg: TrainConfig) -> tuple[Tensor | None, Tensor | None]:
    """Forward pass for both views; a disabled loss is returned as ``None``."""
    z1, z2 = model.embed(x1), model.embed(x2)
    contrastive = nt_xent(z1, z2, cfg.tau) if cfg.model.use_contrastive_loss else None
    divergence = None
    if cfg.model.use_divergence_loss:
        o1, o2 = model.subnets(z1), model.subnets(z2)
        psi = apply_kernel(cfg.kernel, deep_divergence(o1, o2))
        divergence = divergence_loss(psi, cfg.divergence_temperature)
    return contrastive, divergence


def combined(contrastive: Tensor | None, divergence: Tensor | None) -> Tensor:
    if contrastive is None:
        return divergence
    if divergence is None:
        return contrastive
    return total_loss(contrastive, divergence)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_gamma ** sum(epoch >= m for m in cfg.lr_milestones)


def ensure_optimizer(model: ContrastiveDivergenceModel, cfg: TrainConfig) -> AdamState:
    if model.optim is None:
        model.optim = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.eps)
    return model.optim


def train_step(model: ContrastiveDivergenceModel, batch_images: np.ndarray, cfg: TrainConfig,
               rng: np.random.Generator, spec: AugmentSpec | None = None) -> LossBreakdown:
    """Augment, embed, score both losses, backpropagate and take one Adam step."""
    if len(batch_images) == 0:
        raise ValueError("empty batch")
    if spec is None:
        spec = augment_spec(cfg, is_vector=batch_images.shape[1] == 1 and batch_images.shape[2] == 1)
    optim = ensure_optimizer(model, cfg)
    model.train()
    x1, x2 = augment_batch(batch_images, spec, rng)
    n = len(batch_images)
    contrastive, divergence = compute_losses(model, x1.reshape(n, -1), x2.reshape(n, -1), cfg)
    loss = combined(contrastive, divergence)
    model.params.zero_grad()
    loss.backward()
    adam_step(model.params, optim)
    return total_loss(contrastive.item() if contrastive is not None else 0.0,
                      divergence.item() if divergence is not None else 0.0)


@dataclass
class StepRecord:
    step: int
    epoch: int
    contrastive: float
    divergence: float
    total: float


@dataclass
class TrainLog:
    records: list[StepRecord] = field(default_factory=list)
    wall_clock: float = 0.0

    def epoch_means(self, name: str = "total") -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for r in self.records:
            out.setdefault(r.epoch, []).append(getattr(r, name))
        return {e: float(np.mean(v)) for e, v in sorted(out.items())}

    def epoch_summaries(self) -> list[dict]:
        means = {k: self.epoch_means(k) for k in ("contrastive", "divergence", "total")}
        return [{"epoch": e, **{k: means[k][e] for k in means}} for e in means["total"]]

    def to_array(self) -> np.ndarray:
        return np.array([[getattr(r, f) for f in LOG_FIELDS] for r in self.records],
                        dtype=np.float64).reshape(-1, len(LOG_FIELDS))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> TrainLog:
        return cls([StepRecord(int(s), int(e), c, d, t) for s, e, c, d, t in arr.tolist()])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(LOG_FIELDS) + "\n")
        for r in self.records:
            buf.write(f"{r.step},{r.epoch},{r.contrastive!r},{r.divergence!r},{r.total!r}\n")
        return buf.getvalue()


def _checkpoint_extra(log: TrainLog, epochs_done: int) -> dict:
    return {"trainlog": log.to_array(), "meta": {"epochs_done": epochs_done}}


def fit(model: ContrastiveDivergenceModel, dataset: Dataset, cfg: TrainConfig,
        checkpoint_path: str | PathLike | None = None, resume: str | PathLike | None = None,
        stop_after: int | None = None) -> TrainLog:
    """Run ``cfg.epochs`` epochs of ``train_step`` over shuffled batches.

    With ``checkpoint_path`` and ``cfg.checkpoint_every > 0`` a full
    checkpoint is written every that many epochs.  ``resume`` loads such a
    checkpoint into ``model`` and continues from the next epoch.
    ``stop_after`` ends the run early after that many epochs in total.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit on an empty dataset")
    spec = augment_spec(cfg, dataset.is_vector)
    tlog, start = TrainLog(), 0
    if resume is not None:
        restored, _, sections = load_model(resume)
        model.params.load_state(restored.params.state())
        model.optim = restored.optim
        tlog = TrainLog.from_array(sections["trainlog"])
        start = json.loads(sections["meta"].decode())["epochs_done"]
    ensure_optimizer(model, cfg)
    plan = BatchPlan(min(cfg.batch_size, len(dataset)), cfg.seed, drop_last=True)
    last_good = str(resume) if resume is not None else None
    step = tlog.records[-1].step + 1 if tlog.records else 0
    t0 = time.perf_counter()
    end = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start, end):
        model.optim.lr = lr_at(cfg, epoch)
        for b, idx in enumerate(epoch_batches(len(dataset), plan, epoch)):
            rng = seeded_rng(cfg.seed, STEP_STREAM, epoch, b)
            try:
                br = train_step(model, dataset.images[idx], cfg, rng, spec)
            except (TensorError, ValueError) as err:
                raise TrainingError(str(err), epoch, step, last_good) from err
            tlog.records.append(StepRecord(step, epoch, br.contrastive, br.divergence, br.total))
            step += 1
        summary = tlog.epoch_summaries()[-1]
        log.debug("epoch %d: total %.5f", epoch, summary["total"])
        if checkpoint_path is not None and cfg.checkpoint_every > 0 and (epoch + 1) % cfg.checkpoint_every == 0:
            save_model(checkpoint_path, model, cfg, extra=_checkpoint_extra(tlog, epoch + 1))
            last_good = str(checkpoint_path)
    tlog.wall_clock = time.perf_counter() - t0
    return tlog


def save_training_checkpoint(path, model, cfg, tlog: TrainLog) -> None:
    epochs = (tlog.records[-1].epoch + 1) if tlog.records else 0
    save_model(path, model, cfg, extra=_checkpoint_extra(tlog, epochs))


# linear evaluation

@dataclass
class ProbeReport:
    top1: float
    topk: dict[int, float]
    n_train: int
    n_test: int
    num_classes: int
    train_top1: float


def stratified_split(labels: np.ndarray, train_fraction: float, rng: np.random.Generator):
    train, test = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(train_fraction * len(idx)))
        if len(idx) >= 2:
            k = min(max(k, 1), len(idx) - 1)
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def representations(encoder: Encoder, dataset: Dataset) -> np.ndarray:
    encoder.eval()
    return encoder(Tensor(dataset.flat())).data.copy()


def _softmax_xent(logits: Tensor, y: np.ndarray) -> Tensor:
    picked = T.reshape(T.take_along(logits, y, axis=1), (len(y),))
    return T.mean(T.logsumexp(logits, axis=1) - picked)


def _topk_accuracy(scores: np.ndarray, y: np.ndarray, k: int) -> float:
    if len(y) == 0:
        return float("nan")
    # stable ranking: higher score first, lower class index on ties
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean((order == y[:, None]).any(axis=1)))


def linear_eval(encoder: Encoder, dataset: Dataset, probe: ProbeConfig | None = None) -> ProbeReport:
    """Fit a softmax linear classifier on frozen encoder outputs; report held-out accuracy."""
    probe = probe or ProbeConfig()
    if dataset.labels is None:
        raise ValueError("linear evaluation needs a labeled dataset")
    feats = representations(encoder, dataset)
    y = dataset.labels
    k = int(dataset.num_classes or (y.max() + 1))
    rng = seeded_rng(probe.seed, 0x9B0E)
    train_idx, test_idx = stratified_split(y, probe.train_fraction, rng)
    mu = feats[train_idx].mean(axis=0)
    sd = feats[train_idx].std(axis=0)
    sd = np.where(sd > 1e-8, sd, 1.0)
    x = (feats - mu) / sd
    head = Linear(x.shape[1], k, rng)
    opt = AdamState(lr=probe.lr, beta1=0.9, beta2=0.999, weight_decay=0.0)
    plan = BatchPlan(probe.batch_size, probe.seed, drop_last=False)
    for epoch in range(probe.epochs):
        for idx in epoch_batches(len(train_idx), plan, epoch):
            rows = train_idx[idx]
            head.params.zero_grad()
            _softmax_xent(head(Tensor(x[rows])), y[rows]).backward()
            adam_step(head.params, opt)
    scores = head(Tensor(x)).data
    topk = {kk: _topk_accuracy(scores[test_idx], y[test_idx], kk) for kk in (probe.topk,) if k > kk}
    return ProbeReport(_topk_accuracy(scores[test_idx], y[test_idx], 1), topk, len(train_idx),
                       len(test_idx), k, _topk_accuracy(scores[train_idx], y[train_idx], 1))
