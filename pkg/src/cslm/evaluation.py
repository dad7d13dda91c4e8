"""Perplexity of a trained model on a token stream."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as m
from . import numcore as nc
from .corpus import CorpusError, TokenStream, make_batches


@dataclass(frozen=True)
class PerplexityResult:
    tokens_scored: int
    mean_cross_entropy: float   # nats per token
    perplexity: float
    oov_fraction: float = 0.0
    tokens_dropped: int = 0     # batchify remainder plus the final unscored position

    def row(self) -> dict[str, str]:
        return {
            "tokens_scored": str(self.tokens_scored),
            "tokens_dropped": str(self.tokens_dropped),
            "oov_fraction": repr(self.oov_fraction),
            "cross_entropy": repr(self.mean_cross_entropy),
            "perplexity": repr(self.perplexity),
        }


def total_nll(params: m.LstmLmParams, stream: TokenStream, batch_size: int, bptt_steps: int
              ) -> tuple[float, int]:
    """Summed negative log-likelihood (nats) and number of positions scored."""
    if len(stream) == 0:
        raise CorpusError("cannot evaluate an empty stream")
    batch_size = max(1, min(batch_size, len(stream) // 2))
    batches = make_batches(stream, batch_size, bptt_steps)
    state = m.zero_state(batch_size, params.dims, params.dtype)
    total, count = 0.0, 0
    for batch in batches:
        logits, state = m.forward(params, batch, state)
        nll = nc.token_nll(logits, batch.targets.reshape(-1))
        total += float(nll.sum())
        count += nll.size
    return total, count


def perplexity(params: m.LstmLmParams, stream: TokenStream, eval_batch_size: int = 10,
               bptt_steps: int = 35, oov_fraction: float = 0.0) -> PerplexityResult:
    """exp(mean next-token cross-entropy) in eval mode from a zero state.

    ``<eos>`` positions are scored like any other token. When the stream is
    shorter than two rows of ``eval_batch_size`` the batch size shrinks to fit.
    """
    total, count = total_nll(params, stream, eval_batch_size, bptt_steps)
    ce = total / count
    return PerplexityResult(count, ce, math.exp(ce), oov_fraction, len(stream) - count)


def label_mass(params: m.LstmLmParams, stream: TokenStream, ids: np.ndarray,
               batch_size: int = 10, bptt_steps: int = 35) -> float:
    """Mean predicted probability mass placed on the vocabulary subset ``ids``."""
    batch_size = max(1, min(batch_size, len(stream) // 2))
    state = m.zero_state(batch_size, params.dims, params.dtype)
    total, count = 0.0, 0
    for batch in make_batches(stream, batch_size, bptt_steps):
        logits, state = m.forward(params, batch, state)
        probs = np.exp(nc.log_softmax(logits.astype(np.float64)))
        total += probs[:, ids].sum()
        count += len(probs)
    return total / count
