"""Desk-scale synthetic ASR problems.

Words map to 3-state left-to-right phone HMMs; sentence HMMs are phone
chains unrolled frame-synchronously over exactly T frames, with the
sentence LM log-probability folded into the arcs that complete the last
word.  Features are per-pdf Gaussian templates plus isotropic noise, so a
scorer trained on clean data recovers the generating alignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import ancestral_sample, backward_fill
from .lattice import Arc, Lattice, LatticeError
from .latio import Utterance

WordSeq = tuple[int, ...]

STATES_PER_PHONE = 3


@dataclass(frozen=True)
class Lexicon:
    """Word id (dense from 1) to phone-id sequence (0-based)."""

    words: dict[int, tuple[int, ...]]
    num_phones: int
    states_per_phone: int = STATES_PER_PHONE

    def __post_init__(self):
        ids = sorted(self.words)
        if ids != list(range(1, len(ids) + 1)):
            raise LatticeError(f"word ids must be dense from 1, got {ids}")
        for w, phones in self.words.items():
            if not phones:
                raise LatticeError(f"word {w} has an empty phone sequence")
            if any(not (0 <= p < self.num_phones) for p in phones):
                raise LatticeError(f"word {w} uses a phone outside [0, {self.num_phones})")

    @property
    def num_pdfs(self) -> int:
        return self.states_per_phone * self.num_phones

    @property
    def score_width(self) -> int:
        """Score-table column count: pdf ids are 1-based, column 0 unused."""
        return self.num_pdfs + 1

    def pdf_id(self, phone: int, state: int) -> int:
        return 1 + self.states_per_phone * phone + state

    @classmethod
    def one_phone_per_word(cls, vocab_size: int) -> "Lexicon":
        return cls(words={w: (w - 1,) for w in range(1, vocab_size + 1)}, num_phones=vocab_size)


@dataclass(frozen=True)
class HmmTopology:
    """Left-to-right with self-loops; every state loops or advances."""

    self_loop_prob: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.self_loop_prob < 1.0):
            raise LatticeError(f"self-loop probability must be in (0, 1), got {self.self_loop_prob}")

    @property
    def loop_logprob(self) -> float:
        return math.log(self.self_loop_prob)

    @property
    def advance_logprob(self) -> float:
        return math.log(1.0 - self.self_loop_prob)


def sentence_states(words: WordSeq, lexicon: Lexicon) -> list[int]:
    """The flattened chain of pdf ids for a word sequence."""
    pdfs: list[int] = []
    for w in words:
        for phone in lexicon.words[w]:
            for k in range(lexicon.states_per_phone):
                pdfs.append(lexicon.pdf_id(phone, k))
    return pdfs


def sentence_min_frames(words: WordSeq, lexicon: Lexicon) -> int:
    return sum(len(lexicon.words[w]) for w in words) * lexicon.states_per_phone


def build_sentence_graph(
    words: WordSeq,
    lexicon: Lexicon,
    topology: HmmTopology,
    lm_logprob: float,
    num_frames: int,
) -> Lattice:
    """Frame-synchronous unrolling of the sentence HMM over exactly T frames.

    Word labels ride the arcs that complete each word: the advance out of a
    word's last HMM state, or, for the last word, the arcs entering the
    final state, which also carry the sentence LM weight (once per path).
    """
    words = tuple(int(w) for w in words)
    if not words:
        raise LatticeError("a sentence needs at least one word")
    chain = sentence_states(words, lexicon)
    n = len(chain)
    if n > num_frames:
        raise LatticeError(
            f"sentence {words} needs at least {n} frames, only {num_frames} available"
        )
    # word boundary bookkeeping: last chain index of each word
    last_state_of_word = []
    pos = 0
    for w in words:
        pos += len(lexicon.words[w]) * lexicon.states_per_phone
        last_state_of_word.append(pos - 1)
    word_completed_by_advance = {last_state_of_word[i]: words[i] for i in range(len(words) - 1)}
    last_word = words[-1]

    def node_id(j: int, t: int) -> int:
        return 1 + j * (num_frames + 1) + t

    def reachable(j: int, t: int) -> bool:
        return (j + 1) <= t <= num_frames - (n - 1 - j)

    states: list[tuple[int, int]] = [(0, 0)]
    arcs: list[Arc] = []
    for j in range(n):
        for t in range(num_frames + 1):
            if reachable(j, t):
                states.append((node_id(j, t), t))

    def emit(src: int, dst: int, j_dst: int, word: int, weight: float) -> None:
        arcs.append(Arc(src=src, dst=dst, pdf_id=chain[j_dst], word_id=word, graph_weight=weight))

    if reachable(0, 1):
        word0 = last_word if n == 1 and num_frames == 1 else 0
        w0 = lm_logprob if n == 1 and num_frames == 1 else 0.0
        emit(0, node_id(0, 1), 0, word0, w0)
    for j in range(n):
        for t in range(1, num_frames + 1):
            if not reachable(j, t):
                continue
            src = node_id(j, t)
            if t == num_frames:
                continue
            # self loop
            if reachable(j, t + 1):
                word = last_word if (j == n - 1 and t + 1 == num_frames) else 0
                weight = topology.loop_logprob
                if j == n - 1 and t + 1 == num_frames:
                    weight += lm_logprob
                emit(src, node_id(j, t + 1), j, word, weight)
            # advance
            if j + 1 < n and reachable(j + 1, t + 1):
                word = word_completed_by_advance.get(j, 0)
                weight = topology.advance_logprob
                if j + 1 == n - 1 and t + 1 == num_frames:
                    word = last_word
                    weight += lm_logprob
                emit(src, node_id(j + 1, t + 1), j + 1, word, weight)
    final = node_id(n - 1, num_frames)
    return Lattice(num_frames=num_frames, states=tuple(states), start=0,
                   finals=frozenset({final}), arcs=tuple(arcs))


def make_lm(lexicon: Lexicon, max_len: int) -> dict[WordSeq, float]:
    """Uniform normalized unigram over all sentences up to max_len words."""
    sentences: list[WordSeq] = []
    vocab = sorted(lexicon.words)

    def grow(prefix: WordSeq) -> None:
        if prefix:
            sentences.append(prefix)
        if len(prefix) < max_len:
            for w in vocab:
                grow(prefix + (w,))

    grow(())
    logp = -math.log(len(sentences))
    return {s: logp for s in sorted(sentences)}


def sentence_graph_count(words: WordSeq, lexicon: Lexicon, num_frames: int) -> int:
    """Alignments of a sentence over T frames: C(T-1, S-1) by stars and bars."""
    n = sentence_min_frames(words, lexicon)
    if n > num_frames:
        return 0
    return math.comb(num_frames - 1, n - 1)


def build_full_hypothesis_graph(
    lexicon: Lexicon,
    topology: HmmTopology,
    lm: dict[WordSeq, float],
    num_frames: int,
    max_len: int,
    max_paths: int = 1_000_000,
) -> Lattice:
    """Union of sentence graphs over every LM sentence that fits in T frames,
    sharing a single start state; path set = all alignments of all feasible
    hypotheses.  Refuses configurations whose path count exceeds max_paths."""
    total_prob = sum(math.exp(v) for v in lm.values())
    if abs(total_prob - 1.0) > 1e-6:
        raise LatticeError(f"LM weights sum to {total_prob}, expected 1")
    feasible = [s for s in sorted(lm) if len(s) <= max_len
                and sentence_min_frames(s, lexicon) <= num_frames]
    if not feasible:
        raise LatticeError(f"no LM sentence fits in {num_frames} frames")
    count = sum(sentence_graph_count(s, lexicon, num_frames) for s in feasible)
    if count > max_paths:
        raise LatticeError(f"full hypothesis graph has {count} paths, cap is {max_paths}")

    states: list[tuple[int, int]] = [(0, 0)]
    arcs: list[Arc] = []
    finals: list[int] = []
    next_id = 1
    for s in feasible:
        sub = build_sentence_graph(s, lexicon, topology, lm[s], num_frames)
        remap = {sub.start: 0}
        for sid, f in sorted(sub.states, key=lambda sf: (sf[1], sf[0])):
            if sid == sub.start:
                continue
            remap[sid] = next_id
            states.append((next_id, f))
            next_id += 1
        for a in sub.arcs:
            arcs.append(Arc(src=remap[a.src], dst=remap[a.dst], pdf_id=a.pdf_id,
                            word_id=a.word_id, graph_weight=a.graph_weight))
        finals.extend(remap[f] for f in sub.finals)
    return Lattice(num_frames=num_frames, states=tuple(states), start=0,
                   finals=frozenset(finals), arcs=tuple(arcs))


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic task parameters; every random choice derives from seed."""

    vocab_size: int = 3
    max_sentence_len: int = 2
    frames: int = 8
    feature_dim: int = 4
    noise: float = 0.4
    num_train: int = 24
    num_heldout: int = 24
    enum_cap: int = 1_000_000
    self_loop_prob: float = 0.5
    template_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 1 or self.max_sentence_len < 1:
            raise LatticeError("vocab_size and max_sentence_len must be >= 1")
        if self.frames < STATES_PER_PHONE:
            raise LatticeError(
                f"frames={self.frames} cannot fit even a one-phone word ({STATES_PER_PHONE} states)"
            )

    def lexicon(self) -> Lexicon:
        return Lexicon.one_phone_per_word(self.vocab_size)

    def topology(self) -> HmmTopology:
        return HmmTopology(self_loop_prob=self.self_loop_prob)


def pdf_templates(cfg: SynthConfig) -> np.ndarray:
    """Per-pdf feature templates, row 0 unused (pdf ids are 1-based)."""
    lex = cfg.lexicon()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,)))
    templates = rng.normal(0.0, cfg.template_scale, size=(lex.score_width, cfg.feature_dim))
    templates[0] = 0.0
    return templates


def synth_dataset(cfg: SynthConfig) -> tuple[list[Utterance], list[Utterance]]:
    """Deterministic (train, heldout) split.

    Sentences sample from the LM; ones that cannot fit in T frames are
    resampled.  Alignments sample from the sentence HMM's own transition
    distribution, and features are the aligned pdf templates plus noise.
    """
    lex = cfg.lexicon()
    topo = cfg.topology()
    lm = make_lm(lex, cfg.max_sentence_len)
    templates = pdf_templates(cfg)
    sentences = sorted(lm)
    probs = np.array([math.exp(lm[s]) for s in sentences])
    probs /= probs.sum()
    zero_scores = np.zeros((cfg.frames, lex.score_width))
    graph_cache: dict[WordSeq, Lattice] = {}

    def make_split(split_key: int, count: int, prefix: str) -> list[Utterance]:
        utts = []
        for i in range(count):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(split_key, i))
            )
            while True:
                words = sentences[rng.choice(len(sentences), p=probs)]
                if sentence_min_frames(words, lex) <= cfg.frames:
                    break
            graph = graph_cache.get(words)
            if graph is None:
                graph = build_sentence_graph(words, lex, topo, lm[words], cfg.frames)
                graph_cache[words] = graph
            beta = backward_fill(graph, zero_scores)
            alignment = ancestral_sample(graph, zero_scores, beta, seed=int(rng.integers(2**62)))
            feats = templates[np.array(alignment.pdf_sequence)] \
                + cfg.noise * rng.standard_normal((cfg.frames, cfg.feature_dim))
            utts.append(Utterance(utt_id=f"{prefix}{i:04d}", features=feats,
                                  ref_words=words, true_alignment=alignment))
        return utts

    return make_split(1, cfg.num_train, "train"), make_split(2, cfg.num_heldout, "dev")
