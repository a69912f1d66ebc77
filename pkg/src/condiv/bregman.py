"""Vector Bregman divergences and the deep max-affine divergence network."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .nn import BatchNorm1d, Module
from .tensor import ShapeError, Tensor

DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    def __init__(self, kind: str, index: int, value: float):
        self.kind, self.index, self.value = kind, index, value
        super().__init__(f"{kind}: entry {index} = {value!r} outside the potential's domain")


@dataclass(frozen=True)
class Potential:
    """A convex generating function with its gradient and domain predicate."""

    kind: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], bool]

    def check(self, x: np.ndarray) -> None:
        if not self.in_domain(x):
            bad = int(np.argmin(x)) if x.size else 0
            raise DomainError(self.kind, bad, float(x[bad]) if x.size else float("nan"))


def _positive(x: np.ndarray) -> bool:
    return bool(np.all(x > DOMAIN_TOL))


def _everywhere(x: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(x)))


SQUARED_EUCLIDEAN = Potential(
    "squared-euclidean",
    value=lambda x: 0.5 * float(x @ x),
    gradient=lambda x: x.copy(),
    in_domain=_everywhere,
)

NEGATIVE_ENTROPY = Potential(
    "negative-entropy",
    value=lambda x: float(np.sum(x * np.log(x))),
    gradient=lambda x: np.log(x) + 1.0,
    in_domain=_positive,
)

BURG = Potential(
    "burg",
    value=lambda x: float(-np.sum(np.log(x))),
    gradient=lambda x: -1.0 / x,
    in_domain=_positive,
)

POTENTIALS = {p.kind: p for p in (SQUARED_EUCLIDEAN, NEGATIVE_ENTROPY, BURG)}


def potential(kind: str) -> Potential:
    try:
        return POTENTIALS[kind]
    except KeyError:
        raise ValueError(f"unknown potential {kind!r}; choose from {sorted(POTENTIALS)}") from None


def combine(terms: Sequence[tuple[float, Potential]]) -> Potential:
    """Nonnegative combination ``sum_k a_k * phi_k`` (itself a potential)."""
    if any(a < 0 for a, _ in terms):
        raise ValueError("combination weights must be nonnegative")
    terms = tuple(terms)
    return Potential(
        "+".join(f"{a:g}*{p.kind}" for a, p in terms),
        value=lambda x: float(sum(a * p.value(x) for a, p in terms)),
        gradient=lambda x: sum(a * p.gradient(x) for a, p in terms),
        in_domain=lambda x: all(p.in_domain(x) for _, p in terms),
    )


def _vec(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return arr.reshape(-1).astype(np.float64, copy=False)


def bregman_divergence(phi: Potential, x, y) -> float:
    """``phi(x) - phi(y) - <x - y, grad phi(y)>``."""
    x, y = _vec(x), _vec(y)
    if x.shape != y.shape:
        raise ShapeError("bregman_divergence", x.shape, y.shape)
    phi.check(x)
    phi.check(y)
    return phi.value(x) - phi.value(y) - float((x - y) @ phi.gradient(y))


class DeepDivergenceNet(Module):
    """``kappa`` independent affine stacks mapping an embedding to one scalar each.

    Subnetwork ``d`` computes ``((z @ W1[d] + b1[d]) @ W2[d] + b2[d]) @ W3[d] + b3[d]``
    with no nonlinearity in between, so with batch norm off it collapses to
    a single affine map and ``max_d subnet_d(z)`` is convex in ``z``.  All
    subnetworks are evaluated together via broadcasted matmuls.
    """

    def __init__(self, embed_dim: int, kappa: int, rng: np.random.Generator,
                 widths: Sequence[int] = (128, 64), batch_norm: bool = False):
        super().__init__()
        if kappa < 1:
            raise ValueError(f"kappa must be >= 1, got {kappa}")
        self.embed_dim, self.kappa = embed_dim, kappa
        dims = [embed_dim, *widths, 1]
        self.weights, self.biases = [], []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(a)
            w = self.params.add(f"w{i}", Tensor(rng.uniform(-bound, bound, (kappa, a, b))))
            c = self.params.add(f"b{i}", Tensor(rng.uniform(-bound, bound, (kappa, 1, b))))
            self.weights.append(w)
            self.biases.append(c)
        self.bn = None
        if batch_norm:
            self.bn = BatchNorm1d(kappa)
            self.params.extend("bn", self.bn.params)

    def __call__(self, z: Tensor) -> Tensor:
        z = T.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.embed_dim:
            raise ShapeError("DeepDivergenceNet", z.shape, (None, self.embed_dim))
        h = z
        for w, b in zip(self.weights, self.biases):
            h = h @ w + b                       # (kappa, n, width)
        out = T.transpose(T.reshape(h, (self.kappa, z.shape[0])))  # (n, kappa)
        if self.bn is not None:
            out = self.bn(out)
        return out

    def affine_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """Collapsed per-subnetwork ``(W: kappa x d_e, b: kappa)``; valid with batch norm off."""
        w = np.eye(self.embed_dim)[None]
        b = np.zeros((1, 1, self.embed_dim))
        for wt, bt in zip(self.weights, self.biases):
            b = b @ wt.data + bt.data
            w = w @ wt.data
        return w[:, :, 0], b[:, 0, 0]


def phi_hat(net: DeepDivergenceNet, z) -> tuple[Tensor, np.ndarray]:
    """Max-affine generating function per row and the index of the winning subnetwork."""
    return T.max_axis(net(z), axis=1)


def deep_divergence(o1, o2) -> Tensor:
    """Pairwise ``D[i, j] = o1[i, p_i] - o1[i, q_j]`` from subnetwork outputs.

    ``p_i = argmax o1[i]`` and ``q_j = argmax o2[j]`` (lowest index on ties).
    Gradients reach ``o1`` only, through the two gathered entries.
    """
    o1, o2 = T.as_tensor(o1), T.as_tensor(o2)
    if o1.ndim != 2 or o2.ndim != 2 or o1.shape[1] != o2.shape[1]:
        raise ShapeError("deep_divergence", o1.shape, o2.shape)
    top, _ = T.max_axis(o1, axis=1, keepdims=True)      # (n, 1)
    q_star = np.argmax(o2.data, axis=1)
    at_q = T.take(o1, q_star, axis=1)                   # (n, m): o1[i, q_j]
    return top - at_q


@dataclass
class ConvexityReport:
    trials: int
    violations: int
    max_excess: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def convexity_check(net: DeepDivergenceNet, trials: int, rng: np.random.Generator,
                    scale: float = 1.0, tol: float = 1e-10) -> ConvexityReport:
    """Midpoint test of ``phi_hat(l*a + (1-l)*b) <= l*phi_hat(a) + (1-l)*phi_hat(b)``."""
    if net.bn is not None:
        raise ValueError("convexity_check requires batch norm off")
    za = rng.normal(0.0, scale, (trials, net.embed_dim))
    zb = rng.normal(0.0, scale, (trials, net.embed_dim))
    lam = rng.uniform(0.0, 1.0, (trials, 1))
    val = lambda z: phi_hat(net, Tensor(z))[0].data
    lhs = val(lam * za + (1 - lam) * zb)
    rhs = lam[:, 0] * val(za) + (1 - lam[:, 0]) * val(zb)
    excess = lhs - rhs
    return ConvexityReport(trials, int((excess > tol).sum()), float(excess.max(initial=-np.inf)))
