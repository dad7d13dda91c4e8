"""Word-level LSTM language model: embedding -> dropout -> one LSTM layer ->
dropout -> output projection. Gate blocks are stacked in (i, f, g, o) order."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from . import numcore as nc
from .corpus import Batch

GATE_ORDER = "ifgo"
PARAM_NAMES = ("E", "W_ih", "W_hh", "b_ih", "b_hh", "W_out", "b_out")


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    emb_dim: int = 300
    hidden_dim: int = 650

    def __post_init__(self):
        if min(self.vocab_size, self.emb_dim, self.hidden_dim) < 1:
            raise ValueError(f"model dimensions must be positive: {self}")


@dataclass
class LstmLmParams:
    E: np.ndarray       # [V, emb]
    W_ih: np.ndarray    # [4h, emb]
    W_hh: np.ndarray    # [4h, h]
    b_ih: np.ndarray    # [4h]
    b_hh: np.ndarray    # [4h]
    W_out: np.ndarray   # [V, h]
    b_out: np.ndarray   # [V]

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.E.shape[0], self.E.shape[1], self.W_hh.shape[1])

    @property
    def dtype(self):
        return self.E.dtype

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return ((n, getattr(self, n)) for n in PARAM_NAMES)

    def copy(self) -> "LstmLmParams":
        return LstmLmParams(*(a.copy() for a in self.arrays()))

    def astype(self, dtype) -> "LstmLmParams":
        return LstmLmParams(*(a.astype(dtype) for a in self.arrays()))

    def zeros_like(self) -> "LstmLmParams":
        return LstmLmParams(*(np.zeros_like(a) for a in self.arrays()))

    def validate(self) -> None:
        d = self.dims
        h4 = 4 * d.hidden_dim
        expected = {
            "E": (d.vocab_size, d.emb_dim), "W_ih": (h4, d.emb_dim), "W_hh": (h4, d.hidden_dim),
            "b_ih": (h4,), "b_hh": (h4,), "W_out": (d.vocab_size, d.hidden_dim),
            "b_out": (d.vocab_size,),
        }
        for name, arr in self.items():
            if arr.shape != expected[name]:
                raise nc.ShapeError(f"{name} has shape {arr.shape}, expected {expected[name]}")
            if not np.isfinite(arr).all():
                raise FloatingPointError(f"{name} contains non-finite values")


assert tuple(f.name for f in fields(LstmLmParams)) == PARAM_NAMES


def init_params(dims: ModelDims, seed: int, dtype=nc.DTYPE, init_range: float = 0.1) -> LstmLmParams:
    """Weights uniform in [-init_range, init_range], biases zero."""
    rng = nc.make_rng(seed)
    v, e, h = dims.vocab_size, dims.emb_dim, dims.hidden_dim

    def uniform(*shape):
        return rng.uniform(-init_range, init_range, size=shape).astype(dtype)

    return LstmLmParams(
        E=uniform(v, e),
        W_ih=uniform(4 * h, e),
        W_hh=uniform(4 * h, h),
        b_ih=np.zeros(4 * h, dtype=dtype),
        b_hh=np.zeros(4 * h, dtype=dtype),
        W_out=uniform(v, h),
        b_out=np.zeros(v, dtype=dtype),
    )


def zero_params(dims: ModelDims, dtype=nc.DTYPE) -> LstmLmParams:
    return init_params(dims, 0, dtype=dtype).zeros_like()


@dataclass
class HiddenState:
    h: np.ndarray  # [batch, hidden]
    c: np.ndarray


def zero_state(batch_size: int, dims: ModelDims, dtype=nc.DTYPE) -> HiddenState:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    shape = (batch_size, dims.hidden_dim)
    return HiddenState(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


def detach(state: HiddenState) -> HiddenState:
    """Copy of the state that the next backward pass treats as a constant.

    Backward passes here never reach past the incoming state, so this only
    severs aliasing with the previous batch's buffers.
    """
    return HiddenState(state.h.copy(), state.c.copy())


@dataclass
class _Cache:
    ids: np.ndarray
    emb_mask: np.ndarray | None
    x: np.ndarray         # dropped-out embeddings [T, B, emb]
    h_prev: np.ndarray    # [T, B, h]
    c_prev: np.ndarray
    gates: np.ndarray     # activated gates [T, B, 4h]
    tanh_c: np.ndarray
    out_mask: np.ndarray | None
    h_drop: np.ndarray    # [T*B, h]


def _forward(params: LstmLmParams, inputs: np.ndarray, state: HiddenState, train: bool,
             dropout: float, rng: np.random.Generator | None):
    T, B = inputs.shape
    H = params.W_hh.shape[1]
    if state.h.shape != (B, H) or state.c.shape != (B, H):
        raise nc.ShapeError(f"state shape {state.h.shape} does not match batch ({B}, {H})")

    emb = nc.embedding_lookup(params.E, inputs)
    x, emb_mask = nc.dropout(emb, dropout, train, rng)
    xw = nc.matmul(x.reshape(T * B, -1), params.W_ih.T).reshape(T, B, 4 * H)
    xw += params.b_ih + params.b_hh

    dtype = params.dtype
    hs = np.empty((T + 1, B, H), dtype=dtype)
    cs = np.empty((T + 1, B, H), dtype=dtype)
    gates = np.empty((T, B, 4 * H), dtype=dtype)
    tanh_c = np.empty((T, B, H), dtype=dtype)
    hs[0], cs[0] = state.h, state.c
    W_hh_T = params.W_hh.T
    for t in range(T):
        z = xw[t] + hs[t] @ W_hh_T
        g = gates[t]
        g[:, :2 * H] = nc.sigmoid(z[:, :2 * H])
        g[:, 2 * H:3 * H] = nc.tanh(z[:, 2 * H:3 * H])
        g[:, 3 * H:] = nc.sigmoid(z[:, 3 * H:])
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        cs[t + 1] = f * cs[t] + i * gg
        tanh_c[t] = nc.tanh(cs[t + 1])
        hs[t + 1] = o * tanh_c[t]

    h_drop, out_mask = nc.dropout(hs[1:].reshape(T * B, H), dropout, train, rng)
    logits = nc.matmul(h_drop, params.W_out.T) + params.b_out
    cache = _Cache(inputs, emb_mask, x, hs[:-1], cs[:-1], gates, tanh_c, out_mask, h_drop)
    return logits, HiddenState(hs[-1].copy(), cs[-1].copy()), cache


def forward(params: LstmLmParams, batch: Batch, state: HiddenState, train: bool = False,
            dropout: float = 0.0, rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, HiddenState]:
    """Logits of shape [steps*batch, V] (row ``t*batch + b``) and the final state."""
    logits, new_state, _ = _forward(params, batch.inputs, state, train, dropout, rng)
    return logits, new_state


def _backward(params: LstmLmParams, cache: _Cache, dlogits: np.ndarray) -> LstmLmParams:
    T, B, H = cache.tanh_c.shape
    dh_drop, dW_out_T = nc.matmul_backward(cache.h_drop, params.W_out.T, dlogits)
    dhs = nc.dropout_backward(dh_drop, cache.out_mask).reshape(T, B, H)

    dz = np.empty((T, B, 4 * H), dtype=params.dtype)
    dh_next = np.zeros((B, H), dtype=params.dtype)
    dc_next = np.zeros((B, H), dtype=params.dtype)
    W_hh = params.W_hh
    for t in reversed(range(T)):
        g = cache.gates[t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dhs[t] + dh_next
        tc = cache.tanh_c[t]
        dc = dc_next + nc.tanh_backward(tc, dh * o)
        d = dz[t]
        d[:, :H] = nc.sigmoid_backward(i, dc * gg)
        d[:, H:2 * H] = nc.sigmoid_backward(f, dc * cache.c_prev[t])
        d[:, 2 * H:3 * H] = nc.tanh_backward(gg, dc * i)
        d[:, 3 * H:] = nc.sigmoid_backward(o, dh * tc)
        dc_next = dc * f
        dh_next = d @ W_hh

    dz_flat = dz.reshape(T * B, 4 * H)
    dx, dW_ih_T = nc.matmul_backward(cache.x.reshape(T * B, -1), params.W_ih.T, dz_flat)
    emb_mask = None if cache.emb_mask is None else cache.emb_mask.reshape(T * B, -1)
    demb = nc.dropout_backward(dx, emb_mask)
    db = dz_flat.sum(axis=0)
    return LstmLmParams(
        E=nc.embedding_backward(cache.ids, demb, params.E.shape[0]),
        W_ih=np.ascontiguousarray(dW_ih_T.T),
        W_hh=dz_flat.T @ cache.h_prev.reshape(T * B, H),
        b_ih=db,
        b_hh=db.copy(),
        W_out=np.ascontiguousarray(dW_out_T.T),
        b_out=dlogits.sum(axis=0),
    )


def loss_and_grads(params: LstmLmParams, batch: Batch, state: HiddenState, train: bool = False,
                   dropout: float = 0.0, rng: np.random.Generator | None = None
                   ) -> tuple[float, LstmLmParams, HiddenState]:
    """Mean cross-entropy over all steps*batch positions with full gradients.

    Backpropagation stops at the incoming ``state`` (truncated BPTT).
    """
    logits, new_state, cache = _forward(params, batch.inputs, state, train, dropout, rng)
    loss, dlogits = nc.softmax_cross_entropy(logits, batch.targets.reshape(-1))
    return loss, _backward(params, cache, dlogits), new_state
