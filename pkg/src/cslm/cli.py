"""Command-line interface: ``cslm synth|train|eval|bench|gradcheck``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, synth
from .config import ConfigError, RegimeKind, TrainConfig, load_config_file, resolve_config
from .corpus import CorpusError, Lang, Vocabulary, encode, oov_count, read_corpus
from .evaluation import perplexity
from .io import Checkpoint, CheckpointError, atomic_write_text, load_checkpoint, save_checkpoint
from .training import TrainingDiverged, epoch_csv, train

log = logging.getLogger("cslm")

# flag -> TrainConfig field
TRAIN_FLAGS = {
    "regime": "regime", "epochs": "epochs", "batch_size": "batch_size", "bptt": "bptt_steps",
    "emb_dim": "emb_dim", "hidden_dim": "hidden_dim", "dropout": "dropout", "lr": "initial_lr",
    "clip": "clip_norm", "lambda_mse": "lambda_mse", "seed": "seed",
    "eval_batch_size": "eval_batch_size", "valid_fraction": "valid_fraction",
}


def _add_train_flags(p: argparse.ArgumentParser, regime: bool = True) -> None:
    p.add_argument("--config", type=Path, help="key=value file with TrainConfig fields")
    if regime:
        p.add_argument("--regime", choices=[r.value for r in RegimeKind])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--bptt", type=int)
    p.add_argument("--emb-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-lr-halving", action="store_true", default=None)
    p.add_argument("--clip", type=float)
    p.add_argument("--lambda-mse", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-batch-size", type=int)
    p.add_argument("--valid-fraction", type=float)


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {field: getattr(args, flag, None) for flag, field in TRAIN_FLAGS.items()}
    if getattr(args, "no_lr_halving", None):
        overrides["lr_halving"] = False
    return resolve_config(file_values, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cslm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic bilingual corpora")
    defaults = synth.SyntheticSpec()
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--states", type=int, default=defaults.states)
    p.add_argument("--words", type=int, default=defaults.words_per_language)
    p.add_argument("--tokens", type=int, default=defaults.tokens_per_language)
    p.add_argument("--test-tokens", type=int, default=defaults.cs_test_tokens)
    p.add_argument("--switch-prob", type=float, default=defaults.switch_prob)
    p.add_argument("--mean-sentence-length", type=float, default=defaults.mean_sentence_length)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train one regime")
    p.add_argument("--l1", type=Path, required=True)
    p.add_argument("--l2", type=Path, required=True)
    _add_train_flags(p)
    p.add_argument("--out", type=Path, required=True,
                   help="checkpoint path; vocab and epoch CSV are written beside it")

    p = sub.add_parser("eval", help="perplexity of a checkpoint on a test corpus")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--eval-batch-size", type=int, default=10)
    p.add_argument("--bptt", type=int, default=35)
    p.add_argument("--out", type=Path, help="optional CSV output")

    p = sub.add_parser("bench", help="train and compare all four regimes")
    p.add_argument("--l1", type=Path, required=True)
    p.add_argument("--l2", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    _add_train_flags(p, regime=False)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_synth(args) -> int:
    spec = synth.SyntheticSpec(
        seed=args.seed, states=args.states, words_per_language=args.words,
        tokens_per_language=args.tokens, cs_test_tokens=args.test_tokens,
        switch_prob=args.switch_prob, mean_sentence_length=args.mean_sentence_length)
    paths = synth.write_corpora(spec, args.out)
    for path in paths.values():
        print(path)
    return 0


def _checkpoint_paths(out: Path) -> tuple[Path, Path]:
    return out.with_name(out.stem + ".vocab.tsv"), out.with_name(out.stem + ".epochs.csv")


def cmd_train(args) -> int:
    config = config_from_args(args)
    corpora = bench.prepare_corpora(read_corpus(args.l1), read_corpus(args.l2),
                                    valid_fraction=config.valid_fraction)
    l1, l2, valid = corpora.for_regime(config.regime)
    params, reports = train(config, l1, l2, valid, corpora.vocab)

    vocab_path, csv_path = _checkpoint_paths(args.out)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    vocab_text = corpora.vocab.to_tsv()
    atomic_write_text(vocab_path, vocab_text)
    atomic_write_text(csv_path, epoch_csv(reports))
    save_checkpoint(args.out, Checkpoint(params, corpora.vocab.content_hash(), config.seed,
                                         config.regime.value, len(reports),
                                         {"config": config.fingerprint()}))
    print(f"checkpoint {args.out}\nvocab {vocab_path}\nepochs {csv_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    if vocab.content_hash() != ckpt.vocab_hash:
        raise CheckpointError(f"vocabulary {args.vocab} does not match the checkpoint "
                              "(content hash differs)")
    tokens = read_corpus(args.test)
    result = perplexity(ckpt.params, encode(vocab, tokens, Lang.CS), args.eval_batch_size,
                        args.bptt, oov_count(vocab, tokens) / max(1, len(tokens)))
    print(f"tokens scored   {result.tokens_scored}")
    print(f"tokens dropped  {result.tokens_dropped}")
    print(f"oov fraction    {result.oov_fraction:.6f}")
    print(f"cross-entropy   {result.mean_cross_entropy:.6f} nats/token")
    print(f"perplexity      {result.perplexity:.6f}")
    if args.out:
        row = result.row()
        atomic_write_text(args.out, ",".join(row) + "\n" + ",".join(row.values()) + "\n")
    return 0


def cmd_bench(args) -> int:
    config = config_from_args(args)
    corpora = bench.prepare_corpora(read_corpus(args.l1), read_corpus(args.l2),
                                    read_corpus(args.test), config.valid_fraction)
    args.out.mkdir(parents=True, exist_ok=True)
    report = bench.run_bench(config, corpora)
    atomic_write_text(args.out / "bench.csv", bench.bench_csv(report))
    atomic_write_text(args.out / "bench.txt", bench.bench_table(report))
    atomic_write_text(args.out / "chart.csv", bench.emit_chart_data(report))
    atomic_write_text(args.out / "epochs.csv", bench.epochs_csv(report))
    print(bench.bench_table(report), end="")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    results = run_all(seed=args.seed, tolerance=args.tolerance)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  max rel err {r.max_rel_error:.3e}  {'PASS' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    print("gradcheck: " + ("all passed" if not failed else f"FAILED: {', '.join(failed)}"))
    return 1 if failed else 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "gradcheck": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CorpusError, CheckpointError, TrainingDiverged, OSError) as e:
        print(f"cslm {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
