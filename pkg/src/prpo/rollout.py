"""Trajectory sampling and the output grammar.

A well-formed output is::

    <memory> c_1 ... c_n </memory> <answer> m </answer> [STOP]

with every ``c_i`` a content token and ``m`` a single answer-choice marker.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .env import Vocab
from .errors import ConfigError, NumericalError
from .policy import PolicyParams, decode_logits, log_softmax, prefill, select_prefill


@dataclass(frozen=True)
class GenContext:
    query: tuple
    segment: tuple
    memory: tuple
    context_id: str = ""


def make_context(episode_id: str, step: int, query, segment, memory, lineage: int = 0) -> GenContext:
    """Context whose identity covers episode, step, memory lineage and content.

    ``lineage`` distinguishes memory states that are carried separately
    (branch mode) even when their contents coincide.
    """
    memory = tuple(int(x) for x in memory)
    key = f"{episode_id}|{step}|{lineage}|{','.join(map(str, memory))}"
    digest = hashlib.blake2b(key.encode(), digest_size=8).hexdigest()
    return GenContext(tuple(query), tuple(segment), memory, digest)


@dataclass(frozen=True)
class ParsedOutput:
    memory_span: tuple
    answer: Optional[int]
    well_formed: bool


@dataclass(frozen=True)
class Trajectory:
    tokens: tuple
    logprobs: np.ndarray
    parsed: ParsedOutput
    context: GenContext

    @property
    def context_ref(self) -> str:
        return self.context.context_id

    def to_json(self) -> str:
        return json.dumps(
            {
                "context_id": self.context.context_id,
                "query": list(self.context.query),
                "segment": list(self.context.segment),
                "memory": list(self.context.memory),
                "tokens": list(self.tokens),
                "logprobs": [float(x) for x in self.logprobs],
                "memory_span": list(self.parsed.memory_span),
                "answer": self.parsed.answer,
                "well_formed": self.parsed.well_formed,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Trajectory":
        d = json.loads(line)
        ctx = GenContext(tuple(d["query"]), tuple(d["segment"]), tuple(d["memory"]), d["context_id"])
        parsed = ParsedOutput(tuple(d["memory_span"]), d["answer"], bool(d["well_formed"]))
        return cls(tuple(d["tokens"]), np.array(d["logprobs"], dtype=np.float64), parsed, ctx)


def parse_output(tokens: Sequence[int], vocab: Vocab) -> ParsedOutput:
    """Extract memory and answer; never raises."""
    toks = [int(t) for t in tokens]
    if toks and toks[-1] == vocab.STOP:
        toks = toks[:-1]

    memory: tuple = ()
    if vocab.MEM_OPEN in toks:
        i = toks.index(vocab.MEM_OPEN)
        rest = toks[i + 1 :]
        j = rest.index(vocab.MEM_CLOSE) if vocab.MEM_CLOSE in rest else len(rest)
        memory = tuple(rest[:j])

    answer = None
    if vocab.ANS_OPEN in toks:
        a = toks.index(vocab.ANS_OPEN)
        rest = toks[a + 1 :]
        b = rest.index(vocab.ANS_CLOSE) if vocab.ANS_CLOSE in rest else len(rest)
        region = rest[:b]
        if len(region) == 1 and vocab.is_marker(region[0]):
            answer = region[0] - vocab.K

    n = len(toks)
    well_formed = (
        n >= 5
        and toks[0] == vocab.MEM_OPEN
        and toks[-4:-2] == [vocab.MEM_CLOSE, vocab.ANS_OPEN]
        and vocab.is_marker(toks[-2])
        and toks[-1] == vocab.ANS_CLOSE
        and all(vocab.is_content(t) for t in toks[1:-4])
    )
    if not well_formed:
        return ParsedOutput(memory, answer, False)
    return ParsedOutput(tuple(toks[1:-4]), toks[-2] - vocab.K, True)


def serialize_output(parsed: ParsedOutput, vocab: Vocab, stop: bool = False) -> tuple:
    """Inverse of :func:`parse_output` for well-formed outputs."""
    toks = [vocab.MEM_OPEN, *parsed.memory_span, vocab.MEM_CLOSE, vocab.ANS_OPEN, vocab.marker(parsed.answer), vocab.ANS_CLOSE]
    if stop:
        toks.append(vocab.STOP)
    return tuple(toks)


def token_count(memory_span: Sequence[int]) -> int:
    return len(memory_span)


class NullSink:
    def prefill(self, context_id):
        pass

    def decode(self, n):
        pass


def generate_batch(
    policy: PolicyParams,
    contexts: Sequence[GenContext],
    max_len: int,
    seeds: Optional[Sequence[int]] = None,
    sink=None,
) -> list:
    """Sample one trajectory per context, all positions advanced in lock step.

    ``seeds`` gives each trajectory its own uniform stream; ``None`` decodes
    greedily (lowest id on ties).  Contexts sharing a ``context_id`` share one
    prefill.
    """
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    if not policy.is_finite():
        raise NumericalError("policy parameters are not finite", step=0)
    voc = policy.vocab
    V = voc.size
    N = len(contexts)
    sink = sink or NullSink()
    if N == 0:
        return []

    cache = {}
    pre = np.empty((N, 2, V))
    for i, ctx in enumerate(contexts):
        key = ctx.context_id or id(ctx)
        if key not in cache:
            cache[key] = prefill(policy, ctx)
        pre[i] = cache[key]
        sink.prefill(ctx.context_id or key)

    uniforms = None
    if seeds is not None:
        uniforms = np.stack([np.random.default_rng(int(s)).random(max_len) for s in seeds])

    draft = np.zeros((N, V))
    prev = np.full(N, voc.BOS, dtype=np.int64)
    phase = np.zeros(N, dtype=np.int8)
    alive = np.ones(N, dtype=bool)
    out_tok = np.full((N, max_len), -1, dtype=np.int64)
    out_lp = np.zeros((N, max_len))
    lengths = np.zeros(N, dtype=np.int64)
    rows = np.arange(N)

    for pos in range(max_len):
        idx = rows[alive]
        lg = decode_logits(policy, select_prefill(pre[idx], phase[idx]), draft[idx], prev[idx])
        if not np.all(np.isfinite(lg)):
            raise NumericalError(f"non-finite logits at step {pos}", step=pos)
        lp = log_softmax(lg)
        if uniforms is None:
            tok = lp.argmax(axis=1)
        else:
            cdf = np.cumsum(np.exp(lp), axis=1)
            u = uniforms[idx, pos][:, None] * cdf[:, -1:]
            tok = np.minimum((cdf <= u).sum(axis=1), V - 1)
        out_tok[idx, pos] = tok
        out_lp[idx, pos] = lp[np.arange(len(idx)), tok]
        lengths[idx] += 1

        body = phase[idx] == 1
        closing = body & (tok == voc.MEM_CLOSE)
        adding = body & ~closing
        draft[idx[adding], tok[adding]] += 1.0
        phase[idx[closing]] = 2
        phase[idx[(phase[idx] == 0) & (tok == voc.MEM_OPEN)]] = 1
        prev[idx] = tok
        alive[idx[tok == voc.STOP]] = False
        if not alive.any():
            break

    trajectories = []
    for i, ctx in enumerate(contexts):
        n = int(lengths[i])
        toks = tuple(int(t) for t in out_tok[i, :n])
        sink.decode(n)
        trajectories.append(Trajectory(toks, out_lp[i, :n].copy(), parse_output(toks, voc), ctx))
    return trajectories


def generate(policy: PolicyParams, ctx: GenContext, max_len: int, seed: int, sink=None) -> Trajectory:
    """Sample a single trajectory (identical to the batched path with one row)."""
    return generate_batch(policy, [ctx], max_len, [seed], sink)[0]


def greedy(policy: PolicyParams, ctx: GenContext, max_len: int, sink=None) -> Trajectory:
    return generate_batch(policy, [ctx], max_len, None, sink)[0]
