"""Training loops for the four regimes: single-language, alternating batches,
and alternating batches with the output-embedding MSE penalty."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import model as m
from . import numcore as nc
from .config import Alignment, RegimeKind, TrainConfig
from .corpus import Batch, Tag, TokenStream, Vocabulary, interleave_schedule, make_batches
from .evaluation import perplexity

log = logging.getLogger(__name__)

EPOCH_CSV_HEADER = "epoch,lr,train_cross_entropy,train_mse,valid_perplexity"


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class EpochReport:
    epoch: int
    lr: float
    train_cross_entropy: float
    train_mse: float
    valid_perplexity: float
    seconds: float = 0.0

    def csv_row(self) -> str:
        # wall-clock time stays out of the CSV so reruns are byte-identical
        return (f"{self.epoch},{self.lr!r},{self.train_cross_entropy!r},"
                f"{self.train_mse!r},{self.valid_perplexity!r}")


def epoch_csv(reports: Sequence[EpochReport]) -> str:
    return "".join(line + "\n" for line in [EPOCH_CSV_HEADER, *(r.csv_row() for r in reports)])


def lr_schedule(initial_lr: float, epoch_index: int, halving: bool = True) -> float:
    if epoch_index < 0:
        raise ValueError("epoch_index must be >= 0")
    return initial_lr / 2 ** epoch_index if halving else initial_lr


def aligned_rows(vocab: Vocabulary, alignment: Alignment = Alignment.FREQUENCY_RANK
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Row ids of W_out paired across languages.

    L1-tagged and L2-tagged ids form two pools (SHARED and SPECIAL excluded).
    Under FREQUENCY_RANK each pool is ordered by descending corpus count, ties
    by id; under NONE pools stay in id order. The top K = min pool size rows
    of each pool are paired rank by rank.
    """
    pools = []
    for tag in (Tag.L1, Tag.L2):
        ids = vocab.ids_with_tag(tag)
        if alignment is Alignment.FREQUENCY_RANK:
            ids = sorted(ids, key=lambda i: (-vocab.counts[i], i))
        pools.append(ids)
    if not pools[0] or not pools[1]:
        raise ValueError("MSE regularizer needs at least one L1-only and one L2-only word")
    k = min(len(pools[0]), len(pools[1]))
    return np.array(pools[0][:k]), np.array(pools[1][:k])


def partition_output_rows(W_out: np.ndarray, vocab: Vocabulary,
                          alignment: Alignment = Alignment.FREQUENCY_RANK
                          ) -> tuple[np.ndarray, np.ndarray]:
    rows1, rows2 = aligned_rows(vocab, alignment)
    return W_out[rows1], W_out[rows2]


def mse_regularizer(W_out: np.ndarray, rows: tuple[np.ndarray, np.ndarray]
                    ) -> tuple[float, np.ndarray]:
    """MSE between the aligned row blocks, with its gradient on the full W_out."""
    rows1, rows2 = rows
    loss, d1, d2 = nc.mse(W_out[rows1], W_out[rows2])
    grad = np.zeros_like(W_out)
    grad[rows1] += d1
    grad[rows2] += d2
    return loss, grad


def joint_loss(ce_loss: float, mse_loss: float, lambda_mse: float) -> float:
    return ce_loss + lambda_mse * mse_loss


def build_schedule(regime: RegimeKind, l1: TokenStream, l2: TokenStream, batch_size: int,
                   bptt_steps: int) -> list[Batch]:
    if regime is RegimeKind.L1_ONLY:
        return make_batches(l1, batch_size, bptt_steps)
    if regime is RegimeKind.L2_ONLY:
        return make_batches(l2, batch_size, bptt_steps)
    return interleave_schedule(make_batches(l1, batch_size, bptt_steps),
                               make_batches(l2, batch_size, bptt_steps))


@dataclass
class EpochStats:
    mean_cross_entropy: float
    mean_mse: float


def run_epoch(params: m.LstmLmParams, schedule: Sequence[Batch], config: TrainConfig,
              lr: float, rng: np.random.Generator, mse_rows=None, epoch: int = 0
              ) -> EpochStats:
    """One pass over ``schedule`` with one clipped SGD step per batch.

    The hidden state starts at zero and is carried (detached) from each batch
    into the next, whichever language the next batch comes from.
    """
    if not schedule:
        raise ValueError("empty schedule")
    apply_mse = config.regime is RegimeKind.ALTERNATE_MSE and config.lambda_mse > 0
    if apply_mse and mse_rows is None:
        raise ValueError("alternate-mse regime needs aligned output rows")
    names = list(m.PARAM_NAMES)
    state = m.zero_state(config.batch_size, params.dims, params.dtype)
    ce_sum = mse_sum = 0.0
    for k, batch in enumerate(schedule):
        ce, grads, state = m.loss_and_grads(params, batch, state, train=True,
                                            dropout=config.dropout, rng=rng)
        mse_val, total = 0.0, ce
        if apply_mse:
            mse_val, dW = mse_regularizer(params.W_out, mse_rows)
            grads.W_out += params.dtype.type(config.lambda_mse) * dW
            total = joint_loss(ce, mse_val, config.lambda_mse)
        elif mse_rows is not None:
            # diagnostic only; leaves the update untouched
            mse_val = nc.mse(params.W_out[mse_rows[0]], params.W_out[mse_rows[1]])[0]
        if not math.isfinite(total):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {k}, lr {lr}")
        nc.clip_and_step(params.arrays(), grads.arrays(), lr, config.clip_norm, names)
        state = m.detach(state)
        ce_sum += ce
        mse_sum += mse_val
    return EpochStats(ce_sum / len(schedule), mse_sum / len(schedule))


def train(config: TrainConfig, l1: TokenStream, l2: TokenStream, valid: TokenStream | None,
          vocab: Vocabulary, on_epoch: Callable[[EpochReport], None] | None = None
          ) -> tuple[m.LstmLmParams, list[EpochReport]]:
    """Train for ``config.epochs`` epochs from a seeded initialization.

    For the alternating regimes ``l1`` and ``l2`` must already be equalized.
    The unused corpus of a single-language regime is ignored.
    """
    dims = m.ModelDims(len(vocab), config.emb_dim, config.hidden_dim)
    params = m.init_params(dims, config.seed)
    rng = nc.make_rng(config.seed + 1)
    reports: list[EpochReport] = []
    if config.epochs == 0:
        return params, reports

    schedule = build_schedule(config.regime, l1, l2, config.batch_size, config.bptt_steps)
    try:
        mse_rows = aligned_rows(vocab, config.mse_row_alignment)
    except ValueError:
        if config.regime is RegimeKind.ALTERNATE_MSE:
            raise
        mse_rows = None
    for epoch in range(config.epochs):
        start = time.perf_counter()
        lr = lr_schedule(config.initial_lr, epoch, config.lr_halving)
        stats = run_epoch(params, schedule, config, lr, rng, mse_rows, epoch)
        vppl = math.nan
        if valid is not None and len(valid) >= 2:
            vppl = perplexity(params, valid, config.eval_batch_size, config.bptt_steps).perplexity
        report = EpochReport(epoch, lr, stats.mean_cross_entropy, stats.mean_mse, vppl,
                             time.perf_counter() - start)
        reports.append(report)
        log.info("%s epoch %d lr %.4g ce %.4f mse %.3g valid ppl %.3f (%.1fs)",
                 config.regime.value, epoch, lr, report.train_cross_entropy, report.train_mse,
                 vppl, report.seconds)
        if on_epoch:
            on_epoch(report)
    return params, reports


def output_block_mse(params: m.LstmLmParams, vocab: Vocabulary,
                     alignment: Alignment = Alignment.FREQUENCY_RANK) -> float:
    """mse(W1, W2) of the current output projection, whatever the regime."""
    w1, w2 = partition_output_rows(params.W_out, vocab, alignment)
    return nc.mse(w1, w2)[0]
