"""Central finite-difference checks of every hand-written backward pass, in float64.

The error reported per check is the largest elementwise absolute difference
between analytic and numeric gradients, divided by the larger of the two
gradients' max-abs values (an infinity-norm relative error, which stays
meaningful for elements whose true gradient is near zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model as m
from . import numcore as nc
from .corpus import Batch, Lang, Vocabulary, Tag
from .training import aligned_rows, joint_loss, mse_regularizer

EPS = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.tolerance


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def _worst(pairs) -> float:
    return max(rel_error(a, n) for a, n in pairs)


def check_matmul(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    w = rng.normal(size=(4, 5))
    f = lambda: float((nc.matmul(a, b) * w).sum())
    da, db = nc.matmul_backward(a, b, w)
    return _worst([(da, numeric_grad(f, a)), (db, numeric_grad(f, b))])


def check_sigmoid(rng):
    x, w = rng.normal(size=(3, 4)) * 3, rng.normal(size=(3, 4))
    f = lambda: float((nc.sigmoid(x) * w).sum())
    return rel_error(nc.sigmoid_backward(nc.sigmoid(x), w), numeric_grad(f, x))


def check_tanh(rng):
    x, w = rng.normal(size=(3, 4)) * 2, rng.normal(size=(3, 4))
    f = lambda: float((nc.tanh(x) * w).sum())
    return rel_error(nc.tanh_backward(nc.tanh(x), w), numeric_grad(f, x))


def check_softmax_cross_entropy(rng):
    logits, targets = rng.normal(size=(5, 6)) * 2, rng.integers(0, 6, size=5)
    _, d = nc.softmax_cross_entropy(logits, targets)
    f = lambda: nc.softmax_cross_entropy(logits, targets)[0]
    return rel_error(d, numeric_grad(f, logits))


def check_embedding(rng):
    table, ids = rng.normal(size=(6, 3)), np.array([1, 4, 1, 0])
    w = rng.normal(size=(4, 3))
    f = lambda: float((nc.embedding_lookup(table, ids) * w).sum())
    return rel_error(nc.embedding_backward(ids, w, 6), numeric_grad(f, table))


def check_dropout(rng):
    x, w = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    _, mask = nc.dropout(x, 0.3, True, nc.make_rng(11))
    f = lambda: float((nc.dropout(x, 0.3, True, nc.make_rng(11))[0] * w).sum())
    return rel_error(nc.dropout_backward(w, mask), numeric_grad(f, x))


def check_mse(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    _, da, db = nc.mse(a, b)
    f = lambda: nc.mse(a, b)[0]
    return _worst([(da, numeric_grad(f, a)), (db, numeric_grad(f, b))])


def _tiny_vocab() -> Vocabulary:
    words = ["<unk>", "<eos>", "a", "b", "c", "x", "y"]
    tags = [Tag.SPECIAL, Tag.SPECIAL, Tag.L1, Tag.L1, Tag.L1, Tag.L2, Tag.L2]
    return Vocabulary(words, tags, [0, 4, 5, 3, 1, 4, 2])


def check_mse_regularizer(rng):
    vocab = _tiny_vocab()
    W = rng.normal(size=(len(vocab), 4))
    rows = aligned_rows(vocab)
    _, d = mse_regularizer(W, rows)
    return rel_error(d, numeric_grad(lambda: mse_regularizer(W, rows)[0], W))


def _tiny_problem(rng, vocab_size=5, emb=3, hidden=4, steps=2, batch=2):
    params = m.init_params(m.ModelDims(vocab_size, emb, hidden), 3, dtype=np.float64,
                           init_range=0.5)
    params.b_ih[:] = rng.normal(size=params.b_ih.shape) * 0.3
    params.b_hh[:] = rng.normal(size=params.b_hh.shape) * 0.3
    params.b_out[:] = rng.normal(size=params.b_out.shape) * 0.3
    b = Batch(rng.integers(0, vocab_size, (steps, batch)),
              rng.integers(0, vocab_size, (steps, batch)), Lang.L1)
    state = m.HiddenState(rng.normal(size=(batch, hidden)) * 0.5,
                          rng.normal(size=(batch, hidden)) * 0.5)
    return params, b, state


def check_model(rng):
    """Whole unrolled network (V=5, emb=3, h=4, steps=2, batch=2), dropout active."""
    params, batch, state = _tiny_problem(rng)

    def f():
        return m.loss_and_grads(params, batch, state, True, 0.3, nc.make_rng(5))[0]

    _, grads, _ = m.loss_and_grads(params, batch, state, True, 0.3, nc.make_rng(5))
    return _worst((getattr(grads, n), numeric_grad(f, a)) for n, a in params.items())


def check_joint_loss(rng):
    """Cross-entropy plus weighted output-block MSE on a 7-word vocabulary."""
    vocab = _tiny_vocab()
    params, batch, state = _tiny_problem(rng, vocab_size=len(vocab))
    rows = aligned_rows(vocab)
    lam = 0.7

    def f():
        ce = m.loss_and_grads(params, batch, state)[0]
        return joint_loss(ce, mse_regularizer(params.W_out, rows)[0], lam)

    _, grads, _ = m.loss_and_grads(params, batch, state)
    grads.W_out = grads.W_out + lam * mse_regularizer(params.W_out, rows)[1]
    return _worst([(grads.W_out, numeric_grad(f, params.W_out)),
                   (grads.E, numeric_grad(f, params.E))])


CHECKS = {
    "matmul": check_matmul,
    "sigmoid": check_sigmoid,
    "tanh": check_tanh,
    "softmax_cross_entropy": check_softmax_cross_entropy,
    "embedding_lookup": check_embedding,
    "dropout": check_dropout,
    "mse": check_mse,
    "mse_regularizer": check_mse_regularizer,
    "joint_loss": check_joint_loss,
    "lstm_lm_full_model": check_model,
}


def run_all(seed: int = 0, tolerance: float = 1e-5) -> list[CheckResult]:
    results = []
    for k, (name, check) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        results.append(CheckResult(name, check(rng), tolerance))
    return results
