"""Synthetic segmented-evidence episodes.

Each episode asks which of ``C`` choices holds for one attribute family.  The
deciding fact token is planted in exactly one segment; other segments carry
filler tokens and, optionally, fact tokens of *other* families as distractors.

Token id layout (one flat id space)::

    [0, F)                  query tokens, one per attribute family
    [F, F + F*C)            fact tokens, fact(f, c) = F + f*C + c
    [F + F*C, K)            filler tokens
    [K, K + C)              answer-choice markers
    K + C .. K + C + 3      <memory> </memory> <answer> </answer>
    K + C + 4, K + C + 5    BOS, STOP
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, InputError

N_STRUCTURAL = 6


@dataclass(frozen=True)
class EpisodeSpec:
    num_segments: int = 4
    segment_len: int = 8
    vocab_size: int = 16
    num_choices: int = 4
    distractor_rate: float = 0.5
    evidence_copies: int = 2
    num_families: int = 2

    def validate(self) -> "EpisodeSpec":
        if self.num_segments < 1:
            raise ConfigError(f"num_segments must be >= 1, got {self.num_segments}")
        if self.segment_len < 1:
            raise ConfigError(f"segment_len must be >= 1, got {self.segment_len}")
        if self.num_choices < 2:
            raise ConfigError(f"num_choices must be >= 2, got {self.num_choices}")
        if self.vocab_size < self.num_choices + 2:
            raise ConfigError(
                f"vocab_size must be >= num_choices + 2 "
                f"({self.num_choices + 2}), got {self.vocab_size}"
            )
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError(f"distractor_rate must lie in [0, 1], got {self.distractor_rate}")
        if self.evidence_copies < 1:
            raise ConfigError(f"evidence_copies must be >= 1, got {self.evidence_copies}")
        if self.evidence_copies > self.segment_len:
            raise ConfigError(
                f"evidence_copies must be <= segment_len ({self.segment_len}), "
                f"got {self.evidence_copies}"
            )
        if self.num_families < 1:
            raise ConfigError(f"num_families must be >= 1, got {self.num_families}")
        return self

    @property
    def families(self) -> int:
        # Clamped so that at least one filler id remains.
        fit = (self.vocab_size - 1) // (self.num_choices + 1)
        return max(1, min(self.num_families, fit))

    @property
    def vocab(self) -> "Vocab":
        return Vocab(self.vocab_size, self.num_choices, self.families)


@dataclass(frozen=True)
class Vocab:
    """Id arithmetic for the flat token space."""

    K: int
    C: int
    F: int = 1

    @property
    def size(self) -> int:
        return self.K + self.C + N_STRUCTURAL

    @property
    def MEM_OPEN(self) -> int:
        return self.K + self.C

    @property
    def MEM_CLOSE(self) -> int:
        return self.K + self.C + 1

    @property
    def ANS_OPEN(self) -> int:
        return self.K + self.C + 2

    @property
    def ANS_CLOSE(self) -> int:
        return self.K + self.C + 3

    @property
    def BOS(self) -> int:
        return self.K + self.C + 4

    @property
    def STOP(self) -> int:
        return self.K + self.C + 5

    def marker(self, choice: int) -> int:
        return self.K + choice

    def is_content(self, tok: int) -> bool:
        return 0 <= tok < self.K

    def is_marker(self, tok: int) -> bool:
        return self.K <= tok < self.K + self.C

    def fact(self, family: int, choice: int) -> int:
        return self.F + family * self.C + choice

    def fact_owner(self, tok: int):
        """``(family, choice)`` for a fact token, else ``None``."""
        lo = self.F
        if lo <= tok < lo + self.F * self.C:
            return divmod(tok - lo, self.C)
        return None

    @property
    def fillers(self) -> np.ndarray:
        return np.arange(self.F + self.F * self.C, self.K)


@dataclass(frozen=True)
class Episode:
    query: tuple
    segments: tuple
    gold_answer: int
    evidence_segment: int
    seed: int = 0
    spec: EpisodeSpec = field(default_factory=EpisodeSpec)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def family(self) -> int:
        return self.query[0]

    @property
    def fact_token(self) -> int:
        return self.spec.vocab.fact(self.family, self.gold_answer)

    @cached_property
    def episode_id(self) -> str:
        digest = hashlib.blake2b(self.to_json().encode(), digest_size=4).hexdigest()
        return f"{self.seed}:{digest}"

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "spec": asdict(self.spec),
                "query": list(self.query),
                "segments": [list(s) for s in self.segments],
                "gold_answer": self.gold_answer,
                "evidence_segment": self.evidence_segment,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Episode":
        d = json.loads(line)
        return cls(
            query=tuple(d["query"]),
            segments=tuple(tuple(s) for s in d["segments"]),
            gold_answer=int(d["gold_answer"]),
            evidence_segment=int(d["evidence_segment"]),
            seed=int(d["seed"]),
            spec=EpisodeSpec(**d["spec"]),
        )


def generate_episode(spec: EpisodeSpec, seed: int) -> Episode:
    """Build one episode; a pure function of ``(spec, seed)``."""
    spec.validate()
    voc = spec.vocab
    rng = np.random.default_rng(seed)
    T, S, C, F = spec.num_segments, spec.segment_len, spec.num_choices, voc.F

    family = int(rng.integers(F))
    gold = int(rng.integers(C))
    evidence = int(rng.integers(T))
    fillers = voc.fillers

    segments = []
    for t in range(T):
        seg = rng.choice(fillers, size=S).astype(np.int64)
        taken = np.zeros(S, dtype=bool)
        if t == evidence:
            pos = rng.choice(S, size=spec.evidence_copies, replace=False)
            seg[pos] = voc.fact(family, gold)
            taken[pos] = True
        if F > 1 and rng.random() < spec.distractor_rate and not taken.all():
            other = int(rng.integers(F - 1))
            other += other >= family
            free = np.flatnonzero(~taken)
            seg[rng.choice(free)] = voc.fact(other, int(rng.integers(C)))
        segments.append(tuple(int(x) for x in seg))

    return Episode(
        query=(family,),
        segments=tuple(segments),
        gold_answer=gold,
        evidence_segment=evidence,
        seed=int(seed),
        spec=spec,
    )


def generate_episodes(spec: EpisodeSpec, seeds: Iterable[int]) -> list:
    return [generate_episode(spec, int(s)) for s in seeds]


def save_episodes(episodes: Iterable[Episode], path) -> None:
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(ep.to_json() + "\n")


def load_episodes(path) -> list:
    with open(path) as fh:
        return [Episode.from_json(line) for line in fh if line.strip()]


# --- features ---------------------------------------------------------------

N_BLOCKS = 5  # query, segment, memory, draft, previous token


def feature_dim(vocab: Vocab) -> int:
    return N_BLOCKS * vocab.size


def _check_tokens(seq, V, what):
    for tok in seq:
        if not 0 <= tok < V:
            raise InputError(f"{what} token id {tok} outside [0, {V})")


def featurize(
    query: Sequence[int],
    segment: Sequence[int],
    memory: Sequence[int],
    prev_token: int,
    vocab: Vocab,
    draft: Sequence[int] = (),
) -> np.ndarray:
    """Dense feature vector of length ``5 * vocab.size``.

    Blocks, in order: bag-of-token counts of the query, the current segment,
    the incoming memory and the memory body drafted so far in the current
    output, then a one-hot of the previously emitted token.
    """
    V = vocab.size
    _check_tokens(query, V, "query")
    _check_tokens(segment, V, "segment")
    _check_tokens(memory, V, "memory")
    _check_tokens(draft, V, "draft")
    _check_tokens((prev_token,), V, "prev")
    phi = np.zeros(N_BLOCKS * V)
    for block, seq in enumerate((query, segment, memory, draft)):
        np.add.at(phi, block * V + np.asarray(seq, dtype=np.int64), 1.0)
    phi[4 * V + prev_token] = 1.0
    return phi


def context_terms(query, segment, memory, vocab: Vocab):
    """Sparse ``(cols, vals)`` of the context blocks, sorted by column."""
    V = vocab.size
    _check_tokens(query, V, "query")
    _check_tokens(segment, V, "segment")
    _check_tokens(memory, V, "memory")
    cols = []
    vals = []
    for block, seq in enumerate((query, segment, memory)):
        if len(seq) == 0:
            continue
        ids, counts = np.unique(np.asarray(seq, dtype=np.int64), return_counts=True)
        cols.append(block * V + ids)
        vals.append(counts.astype(np.float64))
    if not cols:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(cols), np.concatenate(vals)


# --- oracle traces ----------------------------------------------------------


@dataclass(frozen=True)
class OracleStep:
    query: tuple
    segment: tuple
    memory: tuple
    output: tuple


def _relevant_facts(tokens, family, vocab):
    out = []
    for tok in tokens:
        owner = vocab.fact_owner(tok)
        if owner is not None and owner[0] == family and tok not in out:
            out.append(tok)
    return out


def render_output(memory: Sequence[int], answer: int, vocab: Vocab, stop: bool = True) -> tuple:
    toks = [vocab.MEM_OPEN, *memory, vocab.MEM_CLOSE, vocab.ANS_OPEN, vocab.marker(answer), vocab.ANS_CLOSE]
    if stop:
        toks.append(vocab.STOP)
    return tuple(toks)


def oracle_trace(episode: Episode) -> list:
    """Ideal per-step outputs: retain the queried fact once seen, answer from it.

    Before the evidence segment is reached the oracle has nothing to go on and
    emits a fixed per-(episode, step) guess.
    """
    voc = episode.spec.vocab
    memory: tuple = ()
    steps = []
    for t, seg in enumerate(episode.segments):
        facts = _relevant_facts(list(memory) + list(seg), episode.family, voc)
        new_memory = tuple(facts)
        if facts:
            answer = voc.fact_owner(facts[0])[1]
        else:
            answer = (episode.seed + t) % voc.C
        steps.append(OracleStep(episode.query, seg, memory, render_output(new_memory, answer, voc)))
        memory = new_memory
    return steps


class ScriptedAgent:
    """Hand-written memory agent: copies queried-family facts, answers from them."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab

    def respond(self, query, segment, memory) -> tuple:
        facts = _relevant_facts(list(memory) + list(segment), query[0], self.vocab)
        answer = self.vocab.fact_owner(facts[0])[1] if facts else 0
        return render_output(facts, answer, self.vocab)


def iter_episode_seeds(master_seed: int, stream: int) -> Iterator[int]:
    """Endless stream of episode seeds derived from a master seed."""
    ss = np.random.SeedSequence([master_seed, stream])
    rng = np.random.default_rng(ss)
    while True:
        yield from (int(x) for x in rng.integers(0, 2**31 - 1, size=256))
