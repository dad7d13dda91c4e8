"""Synthetic bilingual corpora over a shared latent bigram chain.

Both languages share the state sequence and the within-state emission
weights; only the surface forms differ (``l1_017`` vs ``l2_017``). Each
word belongs to exactly one latent state, so a token reveals its state and
language, which is what makes the exact entropy-rate oracle tractable.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import EOS, Lang

MODES = ("L1", "L2", "CS")


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    states: int = 8
    words_per_language: int = 100
    tokens_per_language: int = 50_000
    cs_test_tokens: int = 10_000
    switch_prob: float = 0.3
    mean_sentence_length: float = 8.0

    def __post_init__(self):
        if self.states < 1 or self.words_per_language < self.states:
            raise ValueError("need states >= 1 and words_per_language >= states")
        if min(self.tokens_per_language, self.cs_test_tokens) < 1:
            raise ValueError("token counts must be positive")
        if not 0 <= self.switch_prob <= 1:
            raise ValueError("switch_prob must lie in [0, 1]")
        if self.mean_sentence_length < 1:
            raise ValueError("mean_sentence_length must be >= 1")


@dataclass
class LatentGrammar:
    transitions: np.ndarray   # [S, S], rows sum to 1
    word_state: np.ndarray    # [W] latent state owning word index j (same in both languages)
    emission: np.ndarray      # [W] P(word j | its state)
    end_prob: float           # P(sentence ends) after each word

    @property
    def states(self) -> int:
        return self.transitions.shape[0]

    @property
    def words_per_language(self) -> int:
        return len(self.word_state)

    def word(self, language: str, j: int) -> str:
        return f"{language.lower()}_{j:03d}"

    def vocabulary(self, language: str) -> list[str]:
        return [self.word(language, j) for j in range(self.words_per_language)]

    def state_words(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.word_state == s)


@dataclass
class SynthStream:
    """Surface tokens plus the latent annotations that produced them.

    ``states`` and ``langs`` hold -1 at ``<eos>`` positions; ``langs`` is 0
    for L1 and 1 for L2.
    """

    tokens: list[str]
    states: np.ndarray
    langs: np.ndarray
    label: Lang

    def __len__(self) -> int:
        return len(self.tokens)

    def lines(self) -> list[str]:
        out, cur = [], []
        for t in self.tokens:
            if t == EOS:
                out.append(" ".join(cur))
                cur = []
            else:
                cur.append(t)
        if cur:
            out.append(" ".join(cur))
        return out

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def generate_grammar(spec: SyntheticSpec) -> LatentGrammar:
    rng = _rng(spec.seed, 0)
    S, W = spec.states, spec.words_per_language
    transitions = rng.dirichlet(np.ones(S), size=S)
    transitions /= transitions.sum(axis=1, keepdims=True)
    # every state owns at least one word
    word_state = rng.permutation(np.arange(W) % S)
    emission = np.empty(W)
    for s in range(S):
        members = np.flatnonzero(word_state == s)
        emission[members] = rng.dirichlet(np.ones(len(members)))
    return LatentGrammar(transitions, word_state, emission, 1.0 / spec.mean_sentence_length)


def stationary_distribution(transitions: np.ndarray) -> np.ndarray:
    """Unique stationary distribution; raises for reducible chains."""
    S = transitions.shape[0]
    reach = (transitions > 0) | np.eye(S, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(S))) + 1)):
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    if not reach.all():
        raise ValueError("transition matrix is not ergodic (chain is reducible)")
    a = np.vstack([transitions.T - np.eye(S), np.ones(S)])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


class _Sampler:
    def __init__(self, grammar: LatentGrammar, rng: np.random.Generator):
        self.g = grammar
        self.rng = rng
        self.trans_cdf = [np.cumsum(row).tolist() for row in grammar.transitions]
        self.members = [grammar.state_words(s).tolist() for s in range(grammar.states)]
        self.emis_cdf = [np.cumsum(grammar.emission[m]).tolist() for m in self.members]
        self.state = self._draw(np.cumsum(stationary_distribution(grammar.transitions)).tolist())

    def _draw(self, cdf: list[float]) -> int:
        return min(bisect.bisect_right(cdf, self.rng.random() * cdf[-1]), len(cdf) - 1)

    def step(self) -> int:
        self.state = self._draw(self.trans_cdf[self.state])
        return self.state

    def emit(self, s: int) -> int:
        return self.members[s][self._draw(self.emis_cdf[s])]


def _generate(grammar: LatentGrammar, token_target: int, seed: int, mode: str, p: float
              ) -> SynthStream:
    rng = _rng(seed, 1, MODES.index(mode))
    sampler = _Sampler(grammar, rng)
    fixed = 1 if mode == "L2" else 0
    tokens, states, langs = [], [], []
    first = True
    while len(tokens) < token_target:
        lang = fixed
        # sentence opens in the matrix language; the very first state comes from the stationary law
        s = sampler.state if first else sampler.step()
        first = False
        while True:
            tokens.append(grammar.word(MODES[lang], sampler.emit(s)))
            states.append(s)
            langs.append(lang)
            if rng.random() < grammar.end_prob:
                break
            s = sampler.step()
            if mode == "CS" and rng.random() < p:
                lang = 1 - lang
        tokens.append(EOS)
        states.append(-1)
        langs.append(-1)
    label = Lang.CS if mode == "CS" else Lang(mode)
    return SynthStream(tokens, np.array(states), np.array(langs), label)


def generate_monolingual(grammar: LatentGrammar, language: str, token_target: int,
                         seed: int) -> SynthStream:
    if language not in ("L1", "L2"):
        raise ValueError(f"language must be L1 or L2, got {language!r}")
    if token_target < 100:
        raise ValueError("token_target must be >= 100")
    return _generate(grammar, token_target, seed, language, 0.0)


def generate_cs_test(grammar: LatentGrammar, token_target: int, p: float, seed: int) -> SynthStream:
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return _generate(grammar, token_target, seed, "CS", p)


def _next_token_law(grammar: LatentGrammar, prev_state: int, prev_lang: int | None,
                    mode: str, p: float) -> tuple[float, np.ndarray]:
    """(P(eos), P(word j in L1), P(word j in L2)) after a word or, with
    ``prev_lang=None``, after an ``<eos>`` that followed ``prev_state``."""
    q = 0.0 if prev_lang is None else grammar.end_prob
    state_p = grammar.transitions[prev_state][grammar.word_state] * grammar.emission
    words = np.zeros((2, grammar.words_per_language))
    if mode == "CS" and prev_lang is not None:
        words[prev_lang] = (1 - p) * state_p
        words[1 - prev_lang] = p * state_p
    else:
        lang = 1 if mode == "L2" else 0
        words[lang] = state_p
    return q, (1 - q) * words


def oracle_cross_entropy(grammar: LatentGrammar, p: float, language_mode: str) -> float:
    """Exact entropy rate of the generator in bits per token (``<eos>`` included).

    Enumerates every context the next-token law depends on: (state, language)
    after a word, or the state preceding an ``<eos>``. The stationary law over
    those contexts weights the per-context next-token entropies.
    """
    if language_mode not in MODES:
        raise ValueError(f"language_mode must be one of {MODES}")
    stationary_distribution(grammar.transitions)
    S = grammar.states
    contexts = [(s, l) for s in range(S) for l in (0, 1)] + [(s, None) for s in range(S)]
    ctx_index = {c: k for k, c in enumerate(contexts)}
    n = len(contexts)
    P = np.zeros((n, n))
    H = np.zeros(n)
    for k, (s, l) in enumerate(contexts):
        q, words = _next_token_law(grammar, s, l, language_mode, p)
        probs = np.concatenate([[q], words.ravel()])
        nz = probs[probs > 0]
        H[k] = -(nz * np.log2(nz)).sum()
        if q > 0:
            P[k, ctx_index[(s, None)]] += q
        for lang in (0, 1):
            for j in np.flatnonzero(words[lang]):
                P[k, ctx_index[(int(grammar.word_state[j]), lang)]] += words[lang, j]
    # contexts unreachable under the mode (e.g. L2 words in L1 mode) get zero mass
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()
    return float(pi @ H)


def true_log_likelihood(grammar: LatentGrammar, stream: SynthStream, p: float) -> np.ndarray:
    """Natural-log probability of every token after the first under the generator."""
    mode = stream.label.value
    out = np.empty(len(stream) - 1)
    prev_s, prev_l = int(stream.states[0]), int(stream.langs[0])
    last_state = prev_s
    for k in range(1, len(stream)):
        s, l = int(stream.states[k]), int(stream.langs[k])
        ctx_lang = None if prev_l < 0 else prev_l
        q, words = _next_token_law(grammar, last_state, ctx_lang, mode, p)
        if s < 0:
            prob = q
        else:
            j = int(stream.tokens[k].rsplit("_", 1)[1])
            prob = words[l, j]
            last_state = s
        out[k - 1] = math.log(prob)
        prev_l = l
    return out


def manifest(spec: SyntheticSpec, grammar: LatentGrammar) -> dict[str, str]:
    out = {k: str(v) for k, v in asdict(spec).items()}
    for mode in MODES:
        bits = oracle_cross_entropy(grammar, spec.switch_prob, mode)
        out[f"oracle_bits_{mode.lower()}"] = repr(bits)
        out[f"oracle_nats_{mode.lower()}"] = repr(bits * math.log(2))
    return out


def write_corpora(spec: SyntheticSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write l1.txt, l2.txt, cs_test.txt and manifest.txt into ``out_dir``."""
    from .io import atomic_write_text

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grammar = generate_grammar(spec)
    streams = {
        "l1.txt": generate_monolingual(grammar, "L1", spec.tokens_per_language, spec.seed),
        "l2.txt": generate_monolingual(grammar, "L2", spec.tokens_per_language, spec.seed),
        "cs_test.txt": generate_cs_test(grammar, spec.cs_test_tokens, spec.switch_prob, spec.seed),
    }
    paths = {}
    for name, stream in streams.items():
        paths[name] = out_dir / name
        atomic_write_text(paths[name], stream.text())
    paths["manifest.txt"] = out_dir / "manifest.txt"
    atomic_write_text(paths["manifest.txt"],
                      "".join(f"{k}={v}\n" for k, v in manifest(spec, grammar).items()))
    return paths
