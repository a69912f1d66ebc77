"""NT-Xent, divergence-to-similarity kernels and the contrastive divergence loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

KERNELS = ("gaussian", "inverse", "sqrt-complement", "max-normalized", "arccot")


class ZeroNormError(ValueError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has (near) zero norm; cosine similarity undefined")


def cosine_sim_matrix(z) -> Tensor:
    z = T.as_tensor(z)
    if z.ndim != 2:
        raise ShapeError("cosine_sim_matrix", z.shape)
    norms = np.sqrt((z.data * z.data).sum(axis=1))
    small = np.flatnonzero(norms <= 1e-12)
    if small.size:
        raise ZeroNormError(int(small[0]))
    zn = z / T.l2_norm(z, axis=1, keepdims=True)
    return zn @ zn.T


def nt_xent(z1, z2, tau: float) -> Tensor:
    """Mean NT-Xent over the 2n ordered positive pairs of ``[z1; z2]``.

    Row ``i`` is paired with ``i + n`` (and vice versa); each denominator runs
    over the 2n - 1 rows other than ``i``.
    """
    z1, z2 = T.as_tensor(z1), T.as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ShapeError("nt_xent", z1.shape, z2.shape)
    n = z1.shape[0]
    if n == 0:
        raise ValueError("nt_xent needs at least one pair")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    logits = cosine_sim_matrix(T.concat([z1, z2], axis=0)) * (1.0 / tau)
    pos_idx = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    positives = T.reshape(T.take_along(logits, pos_idx, axis=1), (2 * n,))
    off_diag = 1.0 - np.eye(2 * n)
    per_pair = T.logsumexp(logits, axis=1, mask=off_diag) - positives
    return T.mean(per_pair)


@dataclass(frozen=True)
class SimilarityKernel:
    """Strictly decreasing map from divergence to similarity."""

    kind: str = "gaussian"
    sigma: float = 0.9
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.kind == "arccot" and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


def apply_kernel(kernel: SimilarityKernel, D) -> Tensor:
    D = T.as_tensor(D)
    kind = kernel.kind
    if kind == "gaussian":
        # decreasing form exp(-D / 2 sigma^2); psi(0) == 1
        return T.exp(D * (-1.0 / (2.0 * kernel.sigma ** 2)))
    if kind == "inverse":
        return 1.0 / (1.0 + D)
    if kind == "sqrt-complement":
        if D.size and D.data.max() > 1.0:
            raise ValueError("sqrt-complement kernel needs every divergence in [0, 1]")
        return T.sqrt(1.0 - D)
    if kind == "max-normalized":
        top = float(D.data.max()) if D.size else 0.0
        if top == 0.0:
            return T.Tensor(np.ones(D.shape))
        peak, _ = T.max_axis(T.reshape(D, (-1,)), axis=0)
        return 1.0 - D / peak
    # arccot(a D) = pi/2 - arctan(a D) for D >= 0
    return math.pi / 2 - T.arctan(D * kernel.alpha)


def divergence_loss(psi, temperature: float | None = None) -> Tensor:
    """Row-wise softmax cross-entropy with the diagonal as the positive.

    The denominator includes the positive itself.  ``temperature`` divides the
    logits when given.
    """
    psi = T.as_tensor(psi)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ShapeError("divergence_loss", psi.shape)
    n = psi.shape[0]
    if n == 0:
        raise ValueError("divergence_loss needs at least one row")
    logits = psi if temperature is None else psi * (1.0 / temperature)
    diag = T.reshape(T.take_along(logits, np.arange(n), axis=1), (n,))
    return T.mean(T.logsumexp(logits, axis=1) - diag)


@dataclass(frozen=True)
class LossBreakdown:
    contrastive: float
    divergence: float
    total: float


def total_loss(contrastive, divergence):
    """Unit-weight sum of the two losses.

    Tensors give a Tensor (for backward); plain numbers give a LossBreakdown.
    """
    if isinstance(contrastive, Tensor) or isinstance(divergence, Tensor):
        return T.add(contrastive, divergence)
    c, d = float(contrastive), float(divergence)
    if not (math.isfinite(c) and math.isfinite(d)):
        raise T.NonFiniteError("total_loss", int(not math.isfinite(c)) + int(not math.isfinite(d)))
    return LossBreakdown(c, d, c + d)
