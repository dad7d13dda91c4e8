import numpy as np
import pytest
from hypothesis import given, strategies as st

from cslm.corpus import (EOS, UNK, Batch, CorpusError, Lang, Tag, TokenStream, Vocabulary,
                         batchify, build_vocab, chunk_bptt, decode, encode, equalize,
                         interleave_schedule, lookup_or_unk, make_batches, tokenize_lines)

words = st.text(alphabet="abcxyz", min_size=1, max_size=3)
lines = st.lists(st.lists(words, max_size=6).map(" ".join), min_size=1, max_size=8)


def stream(n, lang=Lang.L1):
    return TokenStream(np.arange(n), lang)


class TestTokenize:
    @pytest.mark.parametrize("text, expected", [
        ("a b\nc", ["a", "b", EOS, "c", EOS]),
        ("", []),
        ("x x x", ["x", "x", "x", EOS]),
        ("a\n\nb\n", ["a", EOS, EOS, "b", EOS]),
    ])
    def test_lines(self, text, expected):
        assert tokenize_lines(text) == expected

    def test_bytes_decoded(self):
        assert tokenize_lines("año b".encode()) == ["año", "b", EOS]

    def test_invalid_utf8_reports_offset(self):
        with pytest.raises(CorpusError, match="byte offset 3"):
            tokenize_lines(b"ab \xff c")


class TestVocab:
    def test_tags_and_size(self):
        v = build_vocab(["a", "b"], ["c"])
        assert len(v) == 5
        assert {w: v.tags[v.index[w]] for w in "abc"} == {"a": Tag.L1, "b": Tag.L1, "c": Tag.L2}
        assert v.tags[v.unk_id] is Tag.SPECIAL and v.tags[v.eos_id] is Tag.SPECIAL

    def test_shared(self):
        v = build_vocab(["a"], ["a"])
        assert v.tags[v.index["a"]] is Tag.SHARED

    def test_counts(self):
        v = build_vocab(["a", "a", "b"], ["c"])
        assert v.counts[v.index["a"]] == 2

    def test_empty_rejected(self):
        with pytest.raises(CorpusError):
            build_vocab([], ["a"])

    def test_lookup(self):
        v = build_vocab(["a", "b"], ["c"])
        assert lookup_or_unk(v, "a") == v.index["a"]
        assert lookup_or_unk(v, "zzz") == v.unk_id
        assert lookup_or_unk(v, EOS) == v.eos_id

    def test_tsv_round_trip(self):
        v = build_vocab(["a", "b", EOS], ["c", "a", EOS])
        text = v.to_tsv()
        assert text.startswith("#cslm-vocab v1\n")
        w = Vocabulary.from_tsv(text)
        assert (w.words, w.tags, w.counts) == (v.words, v.tags, v.counts)
        assert w.content_hash() == v.content_hash()

    def test_tsv_rejects_missing_header(self):
        with pytest.raises(CorpusError):
            Vocabulary.from_tsv("a\t0\tL1\t1\n")

    @given(lines, lines)
    def test_invariants(self, l1_lines, l2_lines):
        t1 = tokenize_lines("\n".join(l1_lines) + "\n")
        t2 = tokenize_lines("\n".join(l2_lines) + "\n")
        v = build_vocab(t1, t2)
        assert sorted(v.index.values()) == list(range(len(v)))
        s1, s2 = set(t1) - {EOS}, set(t2) - {EOS}
        for i, w in enumerate(v.words):
            if v.tags[i] is Tag.SPECIAL:
                assert w in (UNK, EOS)
                continue
            assert v.counts[i] >= 1
            expected = Tag.SHARED if w in s1 and w in s2 else Tag.L1 if w in s1 else Tag.L2
            assert v.tags[i] is expected

    @given(lines)
    def test_round_trip_detokenize(self, text_lines):
        tokens = tokenize_lines("\n".join(text_lines) + "\n")
        v = build_vocab(tokens, ["other"])
        assert decode(v, encode(v, tokens, Lang.L1)) == tokens


class TestEqualize:
    def test_cyclic_extension(self):
        short, long_ = stream(7), TokenStream(np.arange(100, 110), Lang.L2)
        a, b = equalize(short, long_)
        assert a.ids.tolist() == [0, 1, 2, 3, 4, 5, 6, 0, 1, 2]
        assert b is long_

    def test_argument_order_preserved(self):
        a, b = equalize(stream(10), stream(7, Lang.L2))
        assert len(a) == len(b) == 10 and b.language is Lang.L2

    def test_equal_lengths_unchanged(self):
        s, t = stream(5), stream(5, Lang.L2)
        assert equalize(s, t) == (s, t)

    def test_realistic_corpus_sizes(self):
        english, spanish = 4502624, 3940333
        sp, en = equalize(TokenStream(np.zeros(spanish, dtype=np.int32), Lang.L2),
                          TokenStream(np.zeros(english, dtype=np.int32), Lang.L1))
        assert len(sp) - spanish == 562291 == english - spanish

    @given(st.integers(1, 50), st.integers(1, 50))
    def test_lengths_equal(self, n, k):
        a, b = stream(n), TokenStream(np.arange(k) + 1000, Lang.L2)
        x, y = equalize(a, b)
        assert len(x) == len(y) == max(n, k)
        longer, out = (a, x) if n >= k else (b, y)
        assert out.ids.tobytes() == longer.ids.tobytes()


class TestBatching:
    def test_batchify(self):
        m = batchify(stream(13), 2)
        assert m.tolist() == [list(range(6)), list(range(6, 12))]

    def test_batchify_too_short(self):
        with pytest.raises(CorpusError, match="at least 12"):
            batchify(stream(6), 6)

    def test_chunk_widths(self):
        batches = chunk_bptt(np.arange(16).reshape(2, 8), 3)
        assert [b.steps for b in batches] == [3, 3, 1]

    def test_chunk_single_when_bptt_large(self):
        batches = chunk_bptt(np.arange(16).reshape(2, 8), 10)
        assert len(batches) == 1 and batches[0].steps == 7

    def test_shift(self):
        m = np.arange(16).reshape(2, 8)
        for b in chunk_bptt(m, 3):
            assert b.inputs.shape == b.targets.shape
            np.testing.assert_array_equal(b.targets, b.inputs + 1)

    @given(st.integers(4, 200), st.integers(1, 4), st.integers(1, 9))
    def test_every_token_is_input_once(self, n, bs, bptt):
        if n < 2 * bs:
            return
        s = stream(n)
        batches = make_batches(s, bs, bptt)
        seen = np.concatenate([b.inputs.T.reshape(bs, -1) for b in batches], axis=1)
        ncols = n // bs
        # the last column only ever serves as a target
        expected = np.arange(ncols * bs).reshape(bs, ncols)[:, :-1]
        np.testing.assert_array_equal(seen, expected)


class TestInterleave:
    def mk(self, lang, n):
        return [Batch(np.full((1, 1), i), np.full((1, 1), i), lang) for i in range(n)]

    def test_alternates(self):
        a, b = self.mk(Lang.L1, 2), self.mk(Lang.L2, 2)
        assert interleave_schedule(a, b) == [a[0], b[0], a[1], b[1]]

    def test_minimal(self):
        a, b = self.mk(Lang.L1, 1), self.mk(Lang.L2, 1)
        assert interleave_schedule(a, b) == [a[0], b[0]]

    def test_unequal_rejected(self):
        with pytest.raises(CorpusError, match="equalize"):
            interleave_schedule(self.mk(Lang.L1, 2), self.mk(Lang.L2, 1))

    @given(st.integers(1, 20))
    def test_labels_alternate(self, n):
        out = interleave_schedule(self.mk(Lang.L1, n), self.mk(Lang.L2, n))
        assert len(out) == 2 * n
        assert [b.language for b in out] == [Lang.L1, Lang.L2] * n
