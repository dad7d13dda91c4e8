import csv

import pytest

from cslm import cli, gradcheck, synth
from cslm import model as m
from cslm import numcore as nc
from cslm.corpus import Vocabulary, build_vocab
from cslm.io import Checkpoint, load_checkpoint, save_checkpoint

SMALL = ["--epochs", "2", "--batch-size", "4", "--bptt", "6", "--emb-dim", "8",
         "--hidden-dim", "8", "--seed", "3"]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--seed", "2", "--states", "3", "--words", "10", "--tokens", "600",
                     "--test-tokens", "300", "--out", str(out)]) == 0
    return out


def train_args(d, out, *extra):
    return ["train", "--l1", str(d / "l1.txt"), "--l2", str(d / "l2.txt"), *SMALL, *extra,
            "--out", str(out)]


def test_synth_defaults(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cs_test.txt", "l1.txt", "l2.txt", "manifest.txt"]


def test_synth_deterministic_and_manifest(tmp_path, corpus_dir):
    cli.main(["synth", "--seed", "2", "--states", "3", "--words", "10", "--tokens", "600",
              "--test-tokens", "300", "--out", str(tmp_path)])
    for name in ("l1.txt", "l2.txt", "cs_test.txt", "manifest.txt"):
        assert (tmp_path / name).read_bytes() == (corpus_dir / name).read_bytes()
    manifest = dict(line.split("=", 1)
                    for line in (corpus_dir / "manifest.txt").read_text().splitlines())
    spec = synth.SyntheticSpec(seed=2, states=3, words_per_language=10, tokens_per_language=600,
                               cs_test_tokens=300)
    expected = synth.oracle_cross_entropy(synth.generate_grammar(spec), 0.3, "CS")
    assert float(manifest["oracle_bits_cs"]) == expected


def test_synth_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["synth", "--tokens", "200", "--out", str(blocker / "sub")]) == 2
    assert "error" in capsys.readouterr().err


def test_train_l1_only_and_rerun_identical(tmp_path, corpus_dir):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    assert cli.main(train_args(corpus_dir, a, "--regime", "l1-only")) == 0
    assert cli.main(train_args(corpus_dir, b, "--regime", "l1-only")) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.epochs.csv").read_bytes() == (tmp_path / "b.epochs.csv").read_bytes()
    assert load_checkpoint(a).regime == "l1-only"
    vocab = Vocabulary.load(tmp_path / "a.vocab.tsv")
    assert load_checkpoint(a).vocab_hash == vocab.content_hash()


def test_train_zero_epochs_saves_init(tmp_path, corpus_dir):
    out = tmp_path / "z.ckpt"
    args = train_args(corpus_dir, out)
    args[args.index("--epochs") + 1] = "0"
    assert cli.main(args) == 0
    ck = load_checkpoint(out)
    init = m.init_params(ck.params.dims, 3)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(ck.params.arrays(), init.arrays()))
    assert (tmp_path / "z.epochs.csv").read_text().count("\n") == 1


def test_config_file_and_flag_precedence(tmp_path, corpus_dir):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs=1\nregime=l2-only\nseed=9\n")
    out = tmp_path / "c.ckpt"
    assert cli.main(train_args(corpus_dir, out, "--config", str(cfg))) == 0
    ck = load_checkpoint(out)
    # --epochs 2 and --seed 3 from the command line beat the file; regime comes from the file
    assert (ck.epoch, ck.seed, ck.regime) == (2, 3, "l2-only")


def test_config_unknown_key(tmp_path, corpus_dir, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate=1\n")
    assert cli.main(train_args(corpus_dir, tmp_path / "x.ckpt", "--config", str(cfg))) == 2
    assert "unknown key" in capsys.readouterr().err


def test_eval_round_trip_bit_exact(tmp_path, corpus_dir, capsys):
    out = tmp_path / "e.ckpt"
    cli.main(train_args(corpus_dir, out, "--regime", "alternate"))
    capsys.readouterr()
    csv_out = tmp_path / "eval.csv"
    assert cli.main(["eval", str(out), "--vocab", str(tmp_path / "e.vocab.tsv"),
                     "--test", str(corpus_dir / "cs_test.txt"), "--out", str(csv_out)]) == 0
    printed = capsys.readouterr().out
    assert "perplexity" in printed and "oov fraction" in printed
    row = next(csv.DictReader(csv_out.open()))

    from cslm.corpus import Lang, encode, read_corpus
    from cslm.evaluation import perplexity
    from cslm import bench
    c = bench.prepare_corpora(read_corpus(corpus_dir / "l1.txt"),
                              read_corpus(corpus_dir / "l2.txt"))
    from cslm.training import train
    from cslm.config import TrainConfig, RegimeKind
    config = TrainConfig(regime=RegimeKind.ALTERNATE, epochs=2, batch_size=4, bptt_steps=6,
                         emb_dim=8, hidden_dim=8, seed=3)
    params, _ = train(config, *c.for_regime(config.regime), c.vocab)
    before = perplexity(params, encode(c.vocab, read_corpus(corpus_dir / "cs_test.txt"), Lang.CS))
    assert float(row["perplexity"]) == before.perplexity


def test_eval_zero_model_prints_vocab_size(tmp_path, capsys):
    vocab = build_vocab(["a"], ["b"])
    vocab.save(tmp_path / "v.tsv")
    params = m.zero_params(m.ModelDims(len(vocab), 3, 4))
    save_checkpoint(tmp_path / "z.ckpt", Checkpoint(params, vocab.content_hash(), 0, "none", 0))
    (tmp_path / "t.txt").write_text("a b a b a\nb b a\n" * 20)
    assert cli.main(["eval", str(tmp_path / "z.ckpt"), "--vocab", str(tmp_path / "v.tsv"),
                     "--test", str(tmp_path / "t.txt")]) == 0
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("perplexity")][0]
    assert float(line.split()[-1]) == pytest.approx(4.0, rel=1e-6)


def test_eval_hash_mismatch(tmp_path, capsys):
    vocab = build_vocab(["a"], ["b"])
    other = build_vocab(["a"], ["c"])
    other.save(tmp_path / "v.tsv")
    save_checkpoint(tmp_path / "z.ckpt", Checkpoint(m.zero_params(m.ModelDims(4, 2, 2)),
                                                    vocab.content_hash(), 0, "none", 0))
    (tmp_path / "t.txt").write_text("a b\n" * 20)
    assert cli.main(["eval", str(tmp_path / "z.ckpt"), "--vocab", str(tmp_path / "v.tsv"),
                     "--test", str(tmp_path / "t.txt")]) == 2
    assert "does not match" in capsys.readouterr().err


def test_eval_truncated_checkpoint(tmp_path, capsys):
    vocab = build_vocab(["a"], ["b"])
    vocab.save(tmp_path / "v.tsv")
    save_checkpoint(tmp_path / "z.ckpt", Checkpoint(m.zero_params(m.ModelDims(4, 2, 2)),
                                                    vocab.content_hash(), 0, "none", 0))
    data = (tmp_path / "z.ckpt").read_bytes()
    (tmp_path / "z.ckpt").write_bytes(data[:len(data) // 2])
    (tmp_path / "t.txt").write_text("a b\n" * 20)
    assert cli.main(["eval", str(tmp_path / "z.ckpt"), "--vocab", str(tmp_path / "v.tsv"),
                     "--test", str(tmp_path / "t.txt")]) == 2
    assert "corrupt checkpoint" in capsys.readouterr().err


def test_bench_outputs(tmp_path, corpus_dir):
    out = tmp_path / "bench"
    assert cli.main(["bench", "--l1", str(corpus_dir / "l1.txt"), "--l2",
                     str(corpus_dir / "l2.txt"), "--test", str(corpus_dir / "cs_test.txt"),
                     *SMALL, "--out", str(out)]) == 0
    table = (out / "bench.txt").read_text()
    for label in ("Spanish data only", "English data only", "Spanish + English data (*)",
                  "MSE (+)"):
        assert label in table
    chart = list(csv.reader((out / "chart.csv").open()))
    assert chart[0] == ["regime", "perplexity"] and len(chart) - 1 == 4
    assert (out / "bench.csv").exists() and (out / "epochs.csv").exists()


def test_gradcheck_passes(capsys):
    assert cli.main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    for name in gradcheck.CHECKS:
        assert name in out
    assert "FAIL" not in out


def test_gradcheck_catches_broken_backward(monkeypatch, capsys):
    monkeypatch.setattr(nc, "tanh_backward", lambda y, dy: dy * (1 - y))
    assert cli.main(["gradcheck"]) == 1
    assert "FAIL" in capsys.readouterr().out
