"""Corpus ingestion: tokenization, the shared bilingual vocabulary, size
equalization and truncated-BPTT batch streams."""

from __future__ import annotations

import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK = "<unk>"
EOS = "<eos>"
VOCAB_HEADER = "#cslm-vocab v1"


class CorpusError(ValueError):
    pass


class Lang(str, Enum):
    L1 = "L1"
    L2 = "L2"
    CS = "CS"


class Tag(str, Enum):
    L1 = "L1"
    L2 = "L2"
    SHARED = "SHARED"
    SPECIAL = "SPECIAL"


def tokenize_lines(text: str | bytes) -> list[str]:
    """Split text on whitespace, appending EOS after every line.

    Bytes are decoded as strict UTF-8; a decoding failure raises
    CorpusError carrying the offending byte offset.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorpusError(f"invalid UTF-8 at byte offset {e.start}") from e
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    tokens: list[str] = []
    for line in lines:
        tokens.extend(line.split())
        tokens.append(EOS)
    return tokens


def read_corpus(path: str | Path) -> list[str]:
    return tokenize_lines(Path(path).read_bytes())


@dataclass
class Vocabulary:
    words: list[str]
    tags: list[Tag]
    counts: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise CorpusError("duplicate words in vocabulary")
        for special in (UNK, EOS):
            if special not in self.index:
                raise CorpusError(f"vocabulary lacks {special}")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    def ids_with_tag(self, tag: Tag) -> list[int]:
        return [i for i, t in enumerate(self.tags) if t is tag]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write(VOCAB_HEADER + "\n")
        for i, (w, t, c) in enumerate(zip(self.words, self.tags, self.counts)):
            buf.write(f"{w}\t{i}\t{t.value}\t{c}\n")
        return buf.getvalue()

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()

    @classmethod
    def from_tsv(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if not lines or lines[0].strip() != VOCAB_HEADER:
            raise CorpusError(f"missing vocabulary header {VOCAB_HEADER!r}")
        words, tags, counts = [], [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorpusError(f"vocabulary line {lineno}: expected 4 columns")
            word, idx, tag, count = parts
            if int(idx) != len(words):
                raise CorpusError(f"vocabulary line {lineno}: ids must be dense and ordered")
            words.append(word)
            tags.append(Tag(tag))
            counts.append(int(count))
        return cls(words, tags, counts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"))


def build_vocab(l1_tokens: Sequence[str], l2_tokens: Sequence[str]) -> Vocabulary:
    """Build the shared vocabulary over both training corpora.

    Ids 0 and 1 are reserved for ``<unk>`` and ``<eos>``; remaining words
    follow in first-occurrence order (L1 corpus first). No frequency cutoff.
    """
    if not l1_tokens or not l2_tokens:
        raise CorpusError("both training corpora must be non-empty")
    c1 = Counter(t for t in l1_tokens if t not in (UNK, EOS))
    c2 = Counter(t for t in l2_tokens if t not in (UNK, EOS))
    eos_count = sum(1 for t in l1_tokens if t == EOS) + sum(1 for t in l2_tokens if t == EOS)

    words = [UNK, EOS]
    tags = [Tag.SPECIAL, Tag.SPECIAL]
    counts = [0, eos_count]
    for w in dict.fromkeys([*c1, *c2]):
        in1, in2 = w in c1, w in c2
        words.append(w)
        tags.append(Tag.SHARED if in1 and in2 else Tag.L1 if in1 else Tag.L2)
        counts.append(c1[w] + c2[w])
    return Vocabulary(words, tags, counts)


def lookup_or_unk(vocab: Vocabulary, word: str) -> int:
    return vocab.index.get(word, vocab.unk_id)


@dataclass(frozen=True)
class TokenStream:
    ids: np.ndarray
    language: Lang

    def __len__(self) -> int:
        return len(self.ids)


def encode(vocab: Vocabulary, tokens: Iterable[str], language: Lang) -> TokenStream:
    ids = np.fromiter((lookup_or_unk(vocab, t) for t in tokens), dtype=np.int64)
    return TokenStream(ids, Lang(language))


def decode(vocab: Vocabulary, stream: TokenStream) -> list[str]:
    return [vocab.words[i] for i in stream.ids]


def oov_count(vocab: Vocabulary, tokens: Iterable[str]) -> int:
    return sum(1 for t in tokens if t not in vocab.index)


def equalize(shorter: TokenStream, longer: TokenStream) -> tuple[TokenStream, TokenStream]:
    """Extend the shorter stream by cyclic repetition to the longer's length.

    Arguments may be passed in either order; results come back in argument
    order. The longer stream is returned unchanged.
    """
    if len(shorter) == 0 or len(longer) == 0:
        raise CorpusError("cannot equalize an empty stream")
    a, b = shorter, longer
    swapped = len(a) > len(b)
    if swapped:
        a, b = b, a
    if len(a) < len(b):
        reps = np.resize(a.ids, len(b))
        a = TokenStream(reps, a.language)
    return (b, a) if swapped else (a, b)


def split_tail(stream: TokenStream, fraction: float) -> tuple[TokenStream, TokenStream]:
    """Hold out the last ``fraction`` of a stream, e.g. for validation."""
    n_tail = int(round(len(stream) * fraction))
    cut = len(stream) - n_tail
    return (TokenStream(stream.ids[:cut], stream.language),
            TokenStream(stream.ids[cut:], stream.language))


def batchify(stream: TokenStream, batch_size: int) -> np.ndarray:
    """Lay the stream out as ``batch_size`` contiguous rows, dropping the remainder."""
    if batch_size < 1:
        raise CorpusError("batch_size must be positive")
    need = 2 * batch_size
    if len(stream) < need:
        raise CorpusError(
            f"stream of {len(stream)} tokens too short for batch_size {batch_size}; "
            f"need at least {need} (one extra column for the target shift)")
    ncols = len(stream) // batch_size
    return stream.ids[: ncols * batch_size].reshape(batch_size, ncols)


@dataclass(frozen=True)
class Batch:
    """One truncated-BPTT chunk; arrays are [steps, batch]."""

    inputs: np.ndarray
    targets: np.ndarray
    language: Lang

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[1]


def chunk_bptt(matrix: np.ndarray, bptt_steps: int, language: Lang = Lang.L1) -> list[Batch]:
    if bptt_steps < 1:
        raise CorpusError("bptt_steps must be positive")
    ncols = matrix.shape[1]
    if ncols < 2:
        raise CorpusError("matrix needs at least 2 columns")
    batches = []
    for k in range(0, ncols - 1, bptt_steps):
        width = min(bptt_steps, ncols - 1 - k)
        batches.append(Batch(
            inputs=np.ascontiguousarray(matrix[:, k:k + width].T),
            targets=np.ascontiguousarray(matrix[:, k + 1:k + 1 + width].T),
            language=Lang(language),
        ))
    return batches


def make_batches(stream: TokenStream, batch_size: int, bptt_steps: int) -> list[Batch]:
    return chunk_bptt(batchify(stream, batch_size), bptt_steps, stream.language)


def interleave_schedule(l1_batches: Sequence[Batch], l2_batches: Sequence[Batch]) -> list[Batch]:
    if len(l1_batches) != len(l2_batches):
        raise CorpusError(
            f"cannot alternate {len(l1_batches)} L1 batches with {len(l2_batches)} L2 batches; "
            "equalize the corpora before batching")
    out: list[Batch] = []
    for a, b in zip(l1_batches, l2_batches):
        out.extend((a, b))
    return out
