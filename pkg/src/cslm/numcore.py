"""Dense numeric primitives with hand-written backward passes.

Arrays are plain numpy arrays. Training runs in float32; every function
preserves the dtype of its inputs, so float64 arrays give the high-precision
path used by the gradient checks.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

DTYPE = np.float32


class ShapeError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(a: np.ndarray, b: np.ndarray, dc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return dc @ b.T, a.T @ dc


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through sigmoid given its output ``y``."""
    return dy * y * (1 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (1 - y * y)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax.

    Returns the loss (accumulated in float64) and d loss / d logits.
    """
    n, v = logits.shape
    targets = np.asarray(targets)
    if n < 1 or targets.shape != (n,):
        raise ShapeError(f"need one target per logit row, got {targets.shape} for {logits.shape}")
    if targets.min() < 0 or targets.max() >= v:
        raise IndexError(f"target id out of range [0, {v})")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, targets].sum(dtype=np.float64) / n
    grad = np.exp(logp)
    grad[rows, targets] -= 1
    grad /= n
    return float(loss), grad


def token_nll(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row negative log-likelihood, float64."""
    logp = log_softmax(logits)
    return -logp[np.arange(len(targets)), targets].astype(np.float64)


def embedding_lookup(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    return table[ids]


def embedding_backward(ids: np.ndarray, dout: np.ndarray, vocab_size: int) -> np.ndarray:
    """Scatter-add upstream rows into a zero table; duplicate ids accumulate."""
    dtable = np.zeros((vocab_size, dout.shape[-1]), dtype=dout.dtype)
    np.add.at(dtable, np.asarray(ids).reshape(-1), dout.reshape(-1, dout.shape[-1]))
    return dtable


def dropout(x: np.ndarray, p: float, train: bool, rng: np.random.Generator | None
            ) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. Returns the output and the scaled mask (None when inactive)."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0:
        return x, None
    keep = rng.random(x.shape, dtype=np.float32) >= p
    mask = keep.astype(x.dtype) / x.dtype.type(1 - p)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def mse(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Element-mean squared difference and its gradients for both operands."""
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    n = diff.size
    loss = float(np.square(diff, dtype=np.float64).sum() / n)
    da = diff * diff.dtype.type(2.0 / n)
    return loss, da, -da


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.square(g, dtype=np.float64).sum() for g in grads)))


def clip_and_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float,
                  clip_norm: float, names: Sequence[str] | None = None) -> float:
    """Clip all gradients jointly to ``clip_norm`` and apply ``p -= lr * g`` in place.

    Returns the pre-clipping global norm.
    """
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if lr <= 0 or clip_norm <= 0:
        raise ValueError("lr and clip_norm must be positive")
    names = names or [f"param[{i}]" for i in range(len(params))]
    for p, g, name in zip(params, grads, names):
        if p.shape != g.shape:
            raise ShapeError(f"{name}: param {p.shape} vs grad {g.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    norm = global_norm(grads)
    scale = clip_norm / norm if norm > clip_norm else 1.0
    for p, g in zip(params, grads):
        p -= p.dtype.type(lr * scale) * g
    return norm
