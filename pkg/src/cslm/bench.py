"""Four-regime benchmark: train every regime on the same data and geometry,
score each on the code-switched test stream, and format the comparison."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as m
from .config import REPORT_ORDER, TABLE_LABELS, RegimeKind, TrainConfig
from .corpus import (Lang, TokenStream, Vocabulary, build_vocab, encode, equalize, oov_count,
                     split_tail)
from .evaluation import PerplexityResult, perplexity
from .training import EpochReport, output_block_mse, train

log = logging.getLogger(__name__)

CHART_HEADER = ["regime", "perplexity"]
BENCH_HEADER = ["regime", "label", "perplexity", "cross_entropy", "block_mse", "config", "seed"]


class IncompleteReport(RuntimeError):
    pass


@dataclass
class Corpora:
    """Encoded training, validation and test streams sharing one vocabulary."""

    vocab: Vocabulary
    l1: TokenStream
    l2: TokenStream
    l1_valid: TokenStream
    l2_valid: TokenStream
    test: TokenStream | None = None
    test_oov_fraction: float = 0.0

    def for_regime(self, regime: RegimeKind) -> tuple[TokenStream, TokenStream, TokenStream]:
        """(l1, l2, validation) as the regime trains on them."""
        if regime is RegimeKind.L1_ONLY:
            return self.l1, self.l2, self.l1_valid
        if regime is RegimeKind.L2_ONLY:
            return self.l1, self.l2, self.l2_valid
        l1, l2 = equalize(self.l1, self.l2)
        valid = TokenStream(np.concatenate([self.l1_valid.ids, self.l2_valid.ids]), Lang.CS)
        return l1, l2, valid


def prepare_corpora(l1_tokens: Sequence[str], l2_tokens: Sequence[str],
                    test_tokens: Sequence[str] | None = None, valid_fraction: float = 0.1,
                    vocab: Vocabulary | None = None) -> Corpora:
    vocab = vocab or build_vocab(l1_tokens, l2_tokens)
    l1, l1_valid = split_tail(encode(vocab, l1_tokens, Lang.L1), valid_fraction)
    l2, l2_valid = split_tail(encode(vocab, l2_tokens, Lang.L2), valid_fraction)
    test, oov = None, 0.0
    if test_tokens is not None:
        test = encode(vocab, test_tokens, Lang.CS)
        oov = oov_count(vocab, test_tokens) / max(1, len(test_tokens))
    return Corpora(vocab, l1, l2, l1_valid, l2_valid, test, oov)


@dataclass
class BenchRow:
    regime: RegimeKind
    result: PerplexityResult
    block_mse: float
    fingerprint: str
    seed: int
    epochs: list[EpochReport] = field(default_factory=list)

    @property
    def label(self) -> str:
        return TABLE_LABELS[self.regime]

    @property
    def perplexity(self) -> float:
        return self.result.perplexity


@dataclass
class BenchReport:
    rows: list[BenchRow]
    params: dict[RegimeKind, m.LstmLmParams] = field(default_factory=dict, repr=False)

    @property
    def complete(self) -> bool:
        return {r.regime for r in self.rows} == set(RegimeKind)

    def row(self, regime: RegimeKind) -> BenchRow:
        for r in self.rows:
            if r.regime is regime:
                return r
        raise KeyError(regime)

    def ordered(self) -> list[BenchRow]:
        present = {r.regime: r for r in self.rows}
        return [present[k] for k in REPORT_ORDER if k in present]


def run_bench(base: TrainConfig, corpora: Corpora,
              regimes: Sequence[RegimeKind] = REPORT_ORDER) -> BenchReport:
    """Train each regime with identical seed and geometry, then score on the test stream."""
    if corpora.test is None:
        raise ValueError("benchmark needs a code-switched test stream")
    report = BenchReport([])
    for regime in regimes:
        config = base.replace(regime=regime)
        l1, l2, valid = corpora.for_regime(regime)
        try:
            params, epochs = train(config, l1, l2, valid, corpora.vocab)
        except Exception:
            log.error("regime %s failed; report is incomplete", regime.value)
            raise
        result = perplexity(params, corpora.test, config.eval_batch_size, config.bptt_steps,
                            corpora.test_oov_fraction)
        report.rows.append(BenchRow(regime, result,
                                    output_block_mse(params, corpora.vocab, config.mse_row_alignment),
                                    config.fingerprint(), config.seed, epochs))
        report.params[regime] = params
        log.info("%s: test perplexity %.3f", regime.value, result.perplexity)
    return report


def bench_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for r in report.ordered():
        w.writerow([r.regime.value, r.label, repr(r.perplexity), repr(r.result.mean_cross_entropy),
                    repr(r.block_mse), r.fingerprint, r.seed])
    return buf.getvalue()


def bench_table(report: BenchReport) -> str:
    """Aligned two-column text table in the layout of the published results."""
    rows = [(r.label, f"{r.perplexity:.2f}") for r in report.ordered()]
    width = max([len("Training data")] + [len(a) for a, _ in rows])
    lines = [f"{'Training data':<{width}}  Perplexity", "-" * (width + 12)]
    lines += [f"{a:<{width}}  {b:>10}" for a, b in rows]
    if not report.complete:
        lines.append("(incomplete: not every regime finished)")
    return "\n".join(lines) + "\n"


def emit_chart_data(report: BenchReport) -> str:
    """CSV with one (regime label, perplexity) row per regime, in table order."""
    if not report.complete:
        raise IncompleteReport("chart data needs all four regimes")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHART_HEADER)
    for r in report.ordered():
        w.writerow([r.label, repr(r.perplexity)])
    return buf.getvalue()


def epochs_csv(report: BenchReport) -> str:
    lines = ["regime,epoch,lr,train_cross_entropy,train_mse,valid_perplexity"]
    for r in report.ordered():
        lines += [f"{r.regime.value},{e.csv_row()}" for e in r.epochs]
    return "\n".join(lines) + "\n"
