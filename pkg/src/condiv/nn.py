"""Layers, parameter registry, Adam and a finite-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


def seeded_rng(seed: int, *stream) -> np.random.Generator:
    """PCG64 generator for ``seed``; extra integers select an independent substream.

    ``seeded_rng(s, epoch, step)`` is stable across runs and platforms, so
    every consumer can derive its own stream without sharing state.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass
class Param:
    name: str
    tensor: Tensor
    trainable: bool = True


class ParamGraph:
    """Ordered, uniquely named parameters and buffers.

    Buffers (batch-norm running statistics) are registered with
    ``trainable=False``; they are checkpointed but never optimized.
    """

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, tensor: Tensor, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = trainable
        self._entries[name] = Param(name, tensor, trainable)
        return tensor

    def extend(self, prefix: str, other: ParamGraph) -> None:
        for p in other:
            self.add(f"{prefix}.{p.name}", p.tensor, p.trainable)

    def __iter__(self) -> Iterator[Param]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def trainable(self) -> list[Param]:
        return [p for p in self if p.trainable]

    def set_trainable(self, prefix: str, flag: bool) -> None:
        for p in self:
            if p.name.startswith(prefix) and not _is_buffer(p.name):
                p.trainable = flag
                p.tensor.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.trainable():
            p.tensor.zero_grad()

    def state(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {p.name: p.tensor.data.copy() for p in self if p.name.startswith(prefix)}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, arr in state.items():
            if name not in self._entries:
                if strict:
                    raise KeyError(f"unknown parameter {name!r}")
                continue
            dst = self._entries[name].tensor.data
            if dst.shape != arr.shape:
                raise T.ShapeError(f"load_state[{name}]", dst.shape, arr.shape)
            dst[...] = arr
        if strict:
            missing = set(self._entries) - set(state)
            if missing:
                raise KeyError(f"missing parameters: {sorted(missing)}")


def _is_buffer(name: str) -> bool:
    return name.endswith("running_mean") or name.endswith("running_var")


class Module:
    def __init__(self):
        self.params = ParamGraph()
        self.training = True

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.__dict__.values():
            if isinstance(child, Module):
                child.train(mode)
            elif isinstance(child, list):
                for c in child:
                    if isinstance(c, Module):
                        c.train(mode)
        return self

    def eval(self):
        return self.train(False)


def _uniform(rng: np.random.Generator, bound: float, shape) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    """``y = x @ W + b``; weights and bias drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(d_in)
        self.weight = self.params.add("weight", _uniform(rng, bound, (d_in, d_out)))
        self.bias = self.params.add("bias", _uniform(rng, bound, (d_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class BatchNorm1d(Module):
    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = self.params.add("gamma", Tensor(np.ones(dim)))
        self.beta = self.params.add("beta", Tensor(np.zeros(dim)))
        self.running_mean = self.params.add("running_mean", Tensor(np.zeros(dim)), trainable=False)
        self.running_var = self.params.add("running_var", Tensor(np.ones(dim)), trainable=False)

    def __call__(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean.data, self.running_var.data,
                            training=self.training, momentum=self.momentum, eps=self.eps)


class MLP(Module):
    """Stack of dense layers, each followed by ReLU."""

    def __init__(self, widths: list[int], rng: np.random.Generator):
        super().__init__()
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        for i, layer in enumerate(self.layers):
            self.params.extend(str(i), layer.params)

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1] if self.layers else 0

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = T.relu(layer(x))
        return x


class MissingGradError(RuntimeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"parameter {name!r} has no gradient; call backward first")


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamGraph, state: AdamState) -> None:
    """One Adam update over the trainable entries; L2 decay is folded into the gradient."""
    active = params.trainable()
    for p in active:
        if p.tensor.grad is None:
            raise MissingGradError(p.name)
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p in active:
        w = p.tensor.data
        g = p.tensor.grad + state.weight_decay * w
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(w)
            state.v[p.name] = np.zeros_like(w)
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        w -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.tensor.grad = np.zeros_like(w)


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    failures: list[tuple[str, tuple, float, float, float]]  # (name, index, analytic, numeric, rel)
    tol: float

    @property
    def ok(self) -> bool:
        return not self.failures


def grad_check(f: Callable[[], Tensor], params: ParamGraph, step: float = 1e-5,
               tol: float = 1e-4, oracle_dtype=None) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f()`` to central differences.

    ``f`` must be deterministic and read the parameters from ``params``;
    every trainable scalar is perturbed in place by +/- ``step``.

    The analytic pass always runs in float64.  ``oracle_dtype`` (for example
    ``np.longdouble``) evaluates the finite differences in a wider type,
    which matters for entries whose true gradient is exactly zero: float64
    roundoff in ``f`` divided by ``2 * step`` is about 1e-11 there, above
    the 1e-12 absolute floor implied by the relative-error denominator.
    """
    if not 0 < step <= 1e-3:
        raise ValueError(f"step must lie in (0, 1e-3], got {step}")
    params.zero_grad()
    f().backward()

    def evaluate():
        if oracle_dtype is None:
            return f().data[()]
        with T.precision(oracle_dtype):
            return f().data[()]

    worst, checked, failures = 0.0, 0, []
    for p in params.trainable():
        w = p.tensor.data
        analytic = p.tensor.grad.copy()
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            up = w[idx]
            hi = evaluate()
            w[idx] = orig - step
            down = w[idx]
            lo = evaluate()
            w[idx] = orig
            # divide by the step actually taken after float64 rounding
            numeric = float((hi - lo) / (np.longdouble(up) - np.longdouble(down)))
            a = analytic[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, float(rel))
            checked += 1
            if rel >= tol:
                failures.append((p.name, idx, float(a), float(numeric), float(rel)))
    params.zero_grad()
    return GradCheckReport(worst, checked, failures, tol)
