"""Linear-softmax autoregressive token policy.

Logits for the next token are ``W @ phi`` where ``phi`` is the feature vector
from :func:`prpo.env.featurize`.  While the memory block is being written the
policy sees query, segment, incoming memory, draft and previous token; once
``</memory>`` has been emitted it sees only query, draft and previous token,
so the answer is read off the memory it just wrote.

Because ``phi`` is sparse, logits are built
by accumulating weight columns in ascending column order; sampling and replay
share that exact accumulation so stored log-probabilities are reproducible
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import N_BLOCKS, Vocab, context_terms, feature_dim, featurize
from .errors import ConfigError, InputError, NumericalError


@dataclass(frozen=True, eq=False)
class PolicyParams:
    weights: np.ndarray
    vocab: Vocab
    version: int = 0
    _wt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        V, d = self.vocab.size, feature_dim(self.vocab)
        if w.shape != (V, d):
            raise ConfigError(f"weights must have shape {(V, d)}, got {w.shape}")
        w.setflags(write=False)
        wt = np.ascontiguousarray(w.T)
        wt.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_wt", wt)

    @classmethod
    def zeros(cls, vocab: Vocab) -> "PolicyParams":
        return cls(np.zeros((vocab.size, feature_dim(vocab))), vocab)

    @classmethod
    def random(cls, vocab: Vocab, scale: float = 0.1, seed: int = 0) -> "PolicyParams":
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal((vocab.size, feature_dim(vocab))), vocab)

    def updated(self, weights: np.ndarray) -> "PolicyParams":
        """New params one version ahead."""
        if not np.all(np.isfinite(weights)):
            raise NumericalError("non-finite weights in update", step=self.version + 1)
        return PolicyParams(weights, self.vocab, self.version + 1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)))


@dataclass(frozen=True, eq=False)
class ReferenceSnapshot:
    params: PolicyParams

    @classmethod
    def capture(cls, params: PolicyParams) -> "ReferenceSnapshot":
        return cls(PolicyParams(params.weights, params.vocab, params.version))


# --- exact logit accumulation -------------------------------------------------


ANSWER_PHASE = 2


def _accumulate(params, cols, vals):
    acc = np.zeros(params.vocab.size)
    wt = params._wt
    for c, v in zip(cols, vals):
        acc += v * wt[c]
    return acc


def prefill(params: PolicyParams, ctx) -> np.ndarray:
    """Partial logits ``(2, V)``: full context view and answer-phase view."""
    full = _accumulate(params, *context_terms(ctx.query, ctx.segment, ctx.memory, params.vocab))
    answer = _accumulate(params, *context_terms(ctx.query, (), (), params.vocab))
    return np.stack([full, answer])


def context_views(query, segment, memory, phase):
    """The ``(query, segment, memory)`` the policy sees in a given phase."""
    if phase == ANSWER_PHASE:
        return query, (), ()
    return query, segment, memory


def select_prefill(pre: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Pick each row's view from ``(N, 2, V)`` prefilled pairs."""
    return pre[np.arange(len(phase)), (phase == ANSWER_PHASE).astype(np.int64)]


def decode_logits(params: PolicyParams, pre: np.ndarray, draft: np.ndarray, prev: np.ndarray) -> np.ndarray:
    """Finish logits rows given prefilled rows, draft counts and previous tokens.

    ``pre`` and ``draft`` are ``(N, V)``; ``prev`` is ``(N,)``.  Each row's
    value depends only on that row's inputs.
    """
    V = params.vocab.size
    wt = params._wt
    acc = pre.copy()
    for j in np.flatnonzero(draft.any(axis=0)):
        acc += draft[:, j : j + 1] * wt[3 * V + j]
    acc += wt[4 * V + prev]
    return acc


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def prefix_states(tokens, vocab: Vocab):
    """Draft counts, previous token and phase *before* each position.

    The draft is the memory body written so far: tokens after the first
    ``<memory>`` up to (excluding) the next ``</memory>``.  Phase is 0 before
    ``<memory>``, 1 inside the body and 2 after ``</memory>``.
    """
    V = vocab.size
    L = len(tokens)
    draft = np.zeros((L, V))
    prev = np.empty(L, dtype=np.int64)
    phases = np.empty(L, dtype=np.int8)
    phase = 0
    cur = np.zeros(V)
    last = vocab.BOS
    for i, tok in enumerate(tokens):
        draft[i] = cur
        prev[i] = last
        phases[i] = phase
        if phase == 0 and tok == vocab.MEM_OPEN:
            phase = 1
        elif phase == 1:
            if tok == vocab.MEM_CLOSE:
                phase = 2
            else:
                cur = cur.copy()
                cur[tok] += 1.0
        last = tok
    return draft, prev, phases


# --- public operations ----------------------------------------------------------


def _check_tokens(tokens, V):
    t = np.asarray(tokens, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() >= V):
        raise InputError(f"token id outside [0, {V})")
    return t


def logits(params: PolicyParams, ctx, prefix=()) -> np.ndarray:
    """Next-token logits after ``prefix`` has been emitted in context ``ctx``."""
    voc = params.vocab
    prefix = _check_tokens(prefix, voc.size)
    ext = list(prefix) + [voc.BOS]  # dummy next token to read state after prefix
    draft, prev, phase = prefix_states(ext, voc)
    pre = select_prefill(prefill(params, ctx)[None], phase[-1:])
    return decode_logits(params, pre, draft[-1:], prev[-1:])[0]


def logits_dense(params: PolicyParams, ctx, prefix=()) -> np.ndarray:
    """Same as :func:`logits` via an explicit dense ``W @ phi`` (for checks)."""
    voc = params.vocab
    ext = list(prefix) + [voc.BOS]
    draft, prev, phase = prefix_states(ext, voc)
    d_tokens = np.repeat(np.arange(voc.size), draft[-1].astype(int))
    q, seg, mem = context_views(ctx.query, ctx.segment, ctx.memory, phase[-1])
    phi = featurize(q, seg, mem, int(prev[-1]), voc, d_tokens)
    return params.weights @ phi


def token_logprobs(params: PolicyParams, ctx, tokens, pre: np.ndarray | None = None) -> np.ndarray:
    voc = params.vocab
    tokens = _check_tokens(tokens, voc.size)
    draft, prev, phase = prefix_states(tokens, voc)
    if pre is None:
        pre = prefill(params, ctx)
    rows = select_prefill(np.broadcast_to(pre, (len(tokens), 2, voc.size)), phase)
    lp = log_softmax(decode_logits(params, rows, draft, prev))
    return lp[np.arange(len(tokens)), tokens]


def logprob(params: PolicyParams, ctx, tokens):
    """``(total, per_token)`` log-probability of an emitted sequence."""
    if len(tokens) == 0:
        raise InputError("logprob needs a non-empty token sequence")
    per = token_logprobs(params, ctx, tokens)
    return float(per.sum()), per


def context_dense(ctx, vocab: Vocab) -> np.ndarray:
    """Dense context blocks ``(2, d)`` for the writing and answer views."""
    out = np.zeros((2, N_BLOCKS * vocab.size))
    for k, view in enumerate((0, ANSWER_PHASE)):
        cols, vals = context_terms(*context_views(ctx.query, ctx.segment, ctx.memory, view), vocab)
        out[k, cols] = vals
    return out


def dense_features(vocab: Vocab, ctx, tokens) -> np.ndarray:
    """Feature rows ``(len(tokens), d)`` seen before each emitted token."""
    V = vocab.size
    draft, prev, phase = prefix_states(tokens, vocab)
    phi = np.zeros((len(tokens), N_BLOCKS * V))
    phi[:] = context_dense(ctx, vocab)[(phase == ANSWER_PHASE).astype(np.int64)]
    phi[:, 3 * V : 4 * V] = draft
    phi[np.arange(len(tokens)), 4 * V + prev] = 1.0
    return phi


def score_matrix(params: PolicyParams, phi: np.ndarray, tokens) -> np.ndarray:
    """Per-row ``onehot(token) - p`` for precomputed feature rows."""
    p = np.exp(log_softmax(phi @ params.weights.T))
    p[np.arange(len(tokens)), tokens] -= 1.0
    return -p


def grad_logprob(params: PolicyParams, ctx, tokens) -> np.ndarray:
    """Gradient of the total log-probability with respect to the weights."""
    tokens = _check_tokens(tokens, params.vocab.size)
    phi = dense_features(params.vocab, ctx, tokens)
    return score_matrix(params, phi, tokens).T @ phi


def kl_terms(lp: np.ndarray, ref_lp: np.ndarray) -> np.ndarray:
    """Per-token ``exp(ref - lp) - (ref - lp) - 1`` (non-negative)."""
    delta = ref_lp - lp
    return np.maximum(np.expm1(delta) - delta, 0.0)


def kl_divergence(params: PolicyParams, ref: ReferenceSnapshot, trajectories) -> float:
    """Mean per-token KL estimate over the tokens of ``trajectories``."""
    lps, refs = [], []
    for tr in trajectories:
        if len(tr.tokens) == 0:
            continue
        lps.append(token_logprobs(params, tr.context, tr.tokens))
        refs.append(token_logprobs(ref.params, tr.context, tr.tokens))
    if not lps:
        return 0.0
    return float(kl_terms(np.concatenate(lps), np.concatenate(refs)).mean())


# --- checkpoints --------------------------------------------------------------


def save_checkpoint(params: PolicyParams, path) -> None:
    """Text dump: a header line with shape and vocab, then one row per line."""
    V, d = params.weights.shape
    voc = params.vocab
    with open(path, "w") as fh:
        fh.write(f"# prpo-policy v1 rows={V} cols={d} K={voc.K} C={voc.C} F={voc.F} version={params.version}\n")
        for row in params.weights:
            fh.write(" ".join(float(x).hex() for x in row) + "\n")


def load_checkpoint(path) -> PolicyParams:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "prpo-policy"]:
            raise ConfigError(f"{path}: not a policy checkpoint")
        meta = dict(kv.split("=") for kv in header[3:])
        rows = [[float.fromhex(x) for x in line.split()] for line in fh if line.strip()]
    w = np.array(rows, dtype=np.float64)
    if w.shape != (int(meta["rows"]), int(meta["cols"])):
        raise ConfigError(f"{path}: shape header {meta['rows']}x{meta['cols']} does not match body {w.shape}")
    voc = Vocab(int(meta["K"]), int(meta["C"]), int(meta["F"]))
    return PolicyParams(w, voc, int(meta["version"]))
