"""PRPO training loop: grouped rollouts with state propagation, clipped update, cold start."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .env import (
    Episode,
    EpisodeSpec,
    ScriptedAgent,
    Vocab,
    generate_episode,
    iter_episode_seeds,
    oracle_trace,
)
from .errors import ConfigError, NumericalError
from .group import (
    TemperatureSchedule,
    group_advantages,
    select_memory,
    selection_entropy,
    selection_probs,
    temperature,
)
from .policy import (
    ANSWER_PHASE,
    PolicyParams,
    ReferenceSnapshot,
    context_dense,
    decode_logits,
    kl_terms,
    log_softmax,
    prefill,
    prefix_states,
    select_prefill,
)
from .reward import TCR, TR, RewardConfig, assign_rewards, reward_events, step_reward
from .rollout import Trajectory, generate_batch, make_context, parse_output

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    group_size: int = 8
    batch_size: int = 16
    reward: RewardConfig = field(default_factory=RewardConfig)
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    clip_eps: float = 0.2
    kl_coef: float = 0.0
    lr: float = 0.02
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    eps_std: float = 1e-8
    psp: bool = True
    max_len: Optional[int] = None
    n_updates: int = 50
    eval_every: int = 10
    eval_episodes: int = 200
    target_accuracy: float = 0.8
    cold_start: bool = True
    cold_start_episodes: int = 64
    cold_start_epochs: int = 15
    cold_start_lr: float = 0.1
    rl: bool = True
    schedule_per_episode: bool = True
    final_answer_pass: bool = False
    stop_at_target: bool = False

    @property
    def out_len(self) -> int:
        return self.max_len if self.max_len is not None else self.reward.l_max + 8

    def validate(self) -> "TrainConfig":
        self.reward.validate()
        self.schedule.validate()
        if self.rl and self.group_size < 2:
            raise ConfigError(f"group_size must be >= 2 when RL is active, got {self.group_size}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0 or self.cold_start_lr < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.kl_coef < 0:
            raise ConfigError("kl_coef must be >= 0")
        if self.clip_eps < 0:
            raise ConfigError("clip_eps must be >= 0")
        if self.out_len < 1:
            raise ConfigError("max_len must be >= 1")
        return self


# --- bookkeeping --------------------------------------------------------------


class CostCounters:
    """Prefill (distinct contexts), decode (emitted tokens) and reward event counts."""

    def __init__(self):
        self._contexts = set()
        self.decode_events = 0
        self.reward_events = 0

    @property
    def prefill_events(self) -> int:
        return len(self._contexts)

    # sink interface used by rollout.generate_batch
    def prefill(self, context_id):
        self._contexts.add(context_id)

    def decode(self, n):
        self.decode_events += int(n)

    def merge(self, other: "CostCounters") -> None:
        self._contexts |= other._contexts
        self.decode_events += other.decode_events
        self.reward_events += other.reward_events

    def as_dict(self) -> dict:
        return {
            "prefill_events": self.prefill_events,
            "decode_events": self.decode_events,
            "reward_events": self.reward_events,
        }


@dataclass
class BufferEntry:
    trajectory: Trajectory
    advantage: float
    step: int
    episode_id: str


class TrajectoryBuffer:
    def __init__(self):
        self.entries: list = []

    def extend(self, entries: Iterable[BufferEntry]) -> None:
        self.entries.extend(entries)

    def clear(self) -> None:
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


class Adam:
    """Adam for gradient *ascent* with bias correction."""

    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, weights: np.ndarray, grad: np.ndarray, lr: Optional[float] = None) -> np.ndarray:
        lr = self.lr if lr is None else lr
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return weights + lr * m_hat / (np.sqrt(v_hat) + self.eps)


# --- rollout phase ------------------------------------------------------------


@dataclass
class EpisodeRollout:
    entries: list
    counters: CostCounters
    step_accuracy: list  # fraction of the group answering correctly, per step
    step_format: list
    mean_reward: float
    mean_memory_len: float
    selections: list  # (step, probs, chosen)
    breakdown: dict  # mean reward components over scored trajectories


def rollout_phase(
    params: PolicyParams,
    episode: Episode,
    cfg: TrainConfig,
    rng: np.random.Generator,
    global_step: int = 0,
) -> EpisodeRollout:
    """Run the segment loop for one episode and return its buffer slice.

    The selection temperature is indexed by the within-episode step, or by
    ``global_step`` when ``cfg.schedule_per_episode`` is off.
    """
    G = cfg.group_size
    T = episode.num_segments
    eid = episode.episode_id
    counters = CostCounters()
    mode = cfg.reward.mode

    memories = [()] * G  # per-chain memory; all identical under PSP
    lineage_of = [0] * G
    steps_trajs = []
    step_adv = []
    parents = []  # parents[t][i] = index at step t-1 whose memory chain i used
    selections = []

    for t in range(T):
        if cfg.psp or t == 0:
            ctx = make_context(eid, t, episode.query, episode.segments[t], memories[0], lineage_of[0])
            contexts = [ctx] * G
        else:
            contexts = [
                make_context(eid, t, episode.query, episode.segments[t], memories[i], lineage_of[i]) for i in range(G)
            ]
        seeds = rng.integers(0, 2**63 - 1, size=G)
        trajs = generate_batch(params, contexts, cfg.out_len, seeds, counters)
        steps_trajs.append(trajs)

        if mode == TCR or t == T - 1:
            rewards = [step_reward(tr.parsed, episode.gold_answer, cfg.reward).total for tr in trajs]
        else:
            rewards = [0.0] * G
        adv = group_advantages(rewards, cfg.eps_std)
        step_adv.append(adv)

        if t < T - 1:
            if cfg.psp:
                tau = temperature(cfg.schedule, t + 1 if cfg.schedule_per_episode else global_step)
                p = selection_probs(adv, tau)
                j = select_memory([tr.parsed.memory_span for tr in trajs], adv, tau, rng)
                selections.append((t + 1, p, j))
                memories = [trajs[j].parsed.memory_span] * G
                lineage_of = [0] * G
                parents.append([j] * G)
            else:
                memories = [tr.parsed.memory_span for tr in trajs]
                lineage_of = list(range(1, G + 1))
                parents.append(list(range(G)))

    counters.reward_events += reward_events(T, G, mode)

    if mode == TR:
        credit = _terminal_credit(step_adv[-1], parents, G)
    else:
        credit = step_adv

    entries = []
    for t, trajs in enumerate(steps_trajs):
        for i, tr in enumerate(trajs):
            entries.append(BufferEntry(tr, float(credit[t][i]), t, eid))

    # metrics use the actual per-step reward of every trajectory
    breakdowns = assign_rewards(
        [[tr.parsed for tr in trajs] for trajs in steps_trajs],
        episode.gold_answer,
        replace(cfg.reward, mode=TCR),
    )
    acc = [float(np.mean([b.cons for b in row])) for row in breakdowns]
    fmt = [float(np.mean([b.format for b in row])) for row in breakdowns]
    scored = breakdowns if mode == TCR else breakdowns[-1:]
    mean_reward = float(np.mean([b.total for row in scored for b in row]))
    mem_len = float(np.mean([len(tr.parsed.memory_span) for trajs in steps_trajs for tr in trajs]))
    breakdown = {k: float(np.mean([b.as_dict()[k] for row in scored for b in row])) for k in ("cons", "format", "mem_penalty", "total")}
    return EpisodeRollout(entries, counters, acc, fmt, mean_reward, mem_len, selections, breakdown)


def _terminal_credit(final_adv: np.ndarray, parents: list, G: int) -> list:
    """Broadcast terminal advantages back along memory lineage.

    A trajectory receives the mean terminal advantage of the final-step
    trajectories descending from it, or zero when nothing descends from it.
    """
    T = len(parents) + 1
    credit = [None] * T
    credit[T - 1] = np.asarray(final_adv, dtype=np.float64)
    # descendants[i] = set of final-step indices whose chain passes through i
    desc = [{i} for i in range(G)]
    for t in range(T - 2, -1, -1):
        nxt = [set() for _ in range(G)]
        for i in range(G):
            nxt[parents[t][i]] |= desc[i]
        desc = nxt
        credit[t] = np.array([final_adv[sorted(d)].mean() if d else 0.0 for d in desc])
    return credit


# --- update -------------------------------------------------------------------


@dataclass
class TokenBatch:
    """Flattened token rows of a set of (context, tokens) pairs."""

    contexts: list  # distinct contexts
    row_ctx: np.ndarray  # row -> index into contexts
    draft: np.ndarray
    prev: np.ndarray
    phase: np.ndarray
    tokens: np.ndarray
    ctx_dense: np.ndarray  # per distinct context, (2, d) dense views
    vocab: Vocab

    def features(self) -> np.ndarray:
        V = self.vocab.size
        phi = self.ctx_dense[self.row_ctx, (self.phase == ANSWER_PHASE).astype(np.int64)]
        phi[:, 3 * V : 4 * V] = self.draft
        phi[np.arange(len(self.tokens)), 4 * V + self.prev] = 1.0
        return phi

    def prefilled(self, params: PolicyParams) -> np.ndarray:
        pre = np.stack([prefill(params, c) for c in self.contexts])
        return select_prefill(pre[self.row_ctx], self.phase)


def build_batch(vocab: Vocab, pairs: Sequence) -> TokenBatch:
    V = vocab.size
    index: dict = {}
    contexts, dense = [], []
    drafts, prevs, phases, toks, row_ctx = [], [], [], [], []
    for ctx, tokens in pairs:
        key = (ctx.query, ctx.segment, ctx.memory)
        if key not in index:
            index[key] = len(contexts)
            contexts.append(ctx)
            dense.append(context_dense(ctx, vocab))
        d, p, ph = prefix_states(tokens, vocab)
        drafts.append(d)
        prevs.append(p)
        phases.append(ph)
        toks.append(np.asarray(tokens, dtype=np.int64))
        row_ctx.append(np.full(len(tokens), index[key]))
    return TokenBatch(
        contexts,
        np.concatenate(row_ctx),
        np.concatenate(drafts),
        np.concatenate(prevs),
        np.concatenate(phases),
        np.concatenate(toks),
        np.stack(dense),
        vocab,
    )


def batch_log_probs(params: PolicyParams, batch: TokenBatch):
    """Full log-softmax rows and the log-probabilities of the taken tokens.

    Uses the same accumulation as sampling, so on-policy values are exact.
    """
    lp_all = log_softmax(decode_logits(params, batch.prefilled(params), batch.draft, batch.prev))
    return lp_all, lp_all[np.arange(len(batch.tokens)), batch.tokens]


@dataclass
class UpdateStats:
    objective: float
    surrogate: float
    kl: float
    clip_fraction: float
    ratio_min: float
    ratio_max: float
    grad_norm: float
    n_tokens: int


def _entries_batch(params, entries):
    kept = [e for e in entries if len(e.trajectory.tokens)]
    batch = build_batch(params.vocab, [(e.trajectory.context, e.trajectory.tokens) for e in kept])
    adv = np.repeat([e.advantage for e in kept], [len(e.trajectory.tokens) for e in kept])
    old = np.concatenate([e.trajectory.logprobs for e in kept])
    return batch, adv, old


def clipped_objective(params: PolicyParams, batch: TokenBatch, adv, old_lp, ref_lp, clip_eps, kl_coef):
    """Objective value, its weight gradient and diagnostics."""
    lp_all, lp = batch_log_probs(params, batch)
    ratio = np.exp(lp - old_lp)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    unclipped_term = ratio * adv
    clipped_term = clipped * adv
    surr = np.minimum(unclipped_term, clipped_term)
    active = unclipped_term <= clipped_term
    n = len(lp)
    kl = kl_terms(lp, ref_lp) if kl_coef else np.zeros(n)
    objective = surr.mean() - kl_coef * kl.mean()

    coef = np.where(active, adv * ratio, 0.0) / n
    if kl_coef:
        coef -= kl_coef * (1.0 - np.exp(ref_lp - lp)) / n
    score = -np.exp(lp_all)
    score[np.arange(n), batch.tokens] += 1.0
    grad = (score * coef[:, None]).T @ batch.features()
    stats = dict(
        surrogate=float(surr.mean()),
        kl=float(kl.mean()),
        clip_fraction=float(np.mean(~active & (adv != 0))),
        ratio=ratio,
    )
    return float(objective), grad, stats


def grpo_update(
    params: PolicyParams,
    buffer: TrajectoryBuffer,
    ref: ReferenceSnapshot,
    cfg: TrainConfig,
    opt: Adam,
    step: int = 0,
):
    """One clipped-surrogate ascent step over the whole buffer, then clear it."""
    if len(buffer) == 0:
        raise ConfigError("grpo_update needs a non-empty buffer")
    batch, adv, old = _entries_batch(params, buffer.entries)
    ref_lp = batch_log_probs(ref.params, batch)[1] if cfg.kl_coef else old
    obj, grad, st = clipped_objective(params, batch, adv, old, ref_lp, cfg.clip_eps, cfg.kl_coef)
    norm = float(np.linalg.norm(grad))
    if not np.isfinite(norm):
        raise NumericalError(f"non-finite gradient at update {step} (norm={norm})", step=step, norm=norm)
    if grad.any():
        new_w = opt.step(params.weights, grad, cfg.lr)
    else:
        new_w = params.weights
    new_params = params.updated(new_w)
    ratio = st["ratio"]
    buffer.clear()
    return new_params, UpdateStats(
        objective=obj,
        surrogate=st["surrogate"],
        kl=st["kl"],
        clip_fraction=st["clip_fraction"],
        ratio_min=float(ratio.min()),
        ratio_max=float(ratio.max()),
        grad_norm=norm,
        n_tokens=len(ratio),
    )


# --- cold start ---------------------------------------------------------------


def oracle_pairs(episodes: Iterable[Episode]) -> list:
    """``(context, oracle output)`` pairs for every step of every episode."""
    pairs = []
    for ep in episodes:
        for t, st in enumerate(oracle_trace(ep)):
            ctx = make_context(ep.episode_id, t, st.query, st.segment, st.memory)
            pairs.append((ctx, st.output))
    return pairs


def supervised_objective(params: PolicyParams, batch: TokenBatch):
    """Mean per-token log-probability and its gradient."""
    phi = batch.features()
    lp_all = log_softmax(phi @ params.weights.T)
    n = len(batch.tokens)
    score = -np.exp(lp_all)
    score[np.arange(n), batch.tokens] += 1.0
    return float(lp_all[np.arange(n), batch.tokens].mean()), score.T @ phi / n


def cold_start(params: PolicyParams, pairs: Sequence, epochs: int, lr: float, opt: Optional[Adam] = None):
    """Supervised warm start on oracle outputs (full-batch Adam ascent).

    Returns the new params and the mean log-probability before each epoch
    plus the final value.
    """
    if not pairs:
        raise ConfigError("cold_start needs at least one trace")
    batch = build_batch(params.vocab, pairs)
    opt = opt or Adam(params.weights.shape, lr)
    history = []
    for _ in range(epochs):
        mean_lp, grad = supervised_objective(params, batch)
        history.append(mean_lp)
        params = params.updated(opt.step(params.weights, grad, lr))
    history.append(supervised_objective(params, batch)[0])
    return params, history


# --- evaluation ---------------------------------------------------------------


@dataclass
class EvalResult:
    step_accuracy: list
    final_accuracy: float
    format_rate: float
    mean_memory_len: float
    answers: np.ndarray  # (n_episodes, T) provisional answers, -1 when absent


def evaluate(policy, episodes: Sequence[Episode], max_len: int = 1032, final_answer_pass: bool = False) -> EvalResult:
    """Greedy single-chain inference; provisional accuracy at every step.

    ``policy`` is a :class:`PolicyParams` or any object with a
    ``respond(query, segment, memory)`` method (e.g. :class:`ScriptedAgent`).
    """
    if not episodes:
        raise ConfigError("evaluate needs at least one episode")
    T = episodes[0].num_segments
    if any(ep.num_segments != T for ep in episodes):
        raise ConfigError("all evaluation episodes must have the same number of segments")
    n = len(episodes)
    answers = np.full((n, T), -1, dtype=np.int64)
    correct = np.zeros((n, T))
    formats = []
    mem_lens = []
    memories = [()] * n
    for t in range(T):
        contexts = [
            make_context(ep.episode_id, t, ep.query, ep.segments[t], memories[k]) for k, ep in enumerate(episodes)
        ]
        if isinstance(policy, PolicyParams):
            outs = [tr.parsed for tr in generate_batch(policy, contexts, max_len, None)]
        else:
            voc = episodes[0].spec.vocab
            outs = [parse_output(policy.respond(c.query, c.segment, c.memory), voc) for c in contexts]
        for k, (ep, po) in enumerate(zip(episodes, outs)):
            if po.answer is not None:
                answers[k, t] = po.answer
            correct[k, t] = po.answer is not None and po.answer == ep.gold_answer
            formats.append(po.well_formed)
            mem_lens.append(len(po.memory_span))
        memories = [po.memory_span for po in outs]

    step_acc = correct.mean(axis=0).tolist()
    final = step_acc[-1]
    if final_answer_pass and isinstance(policy, PolicyParams):
        # extra answer-only pass over the final memory with an empty segment
        contexts = [make_context(ep.episode_id, T, ep.query, (), memories[k]) for k, ep in enumerate(episodes)]
        outs = [tr.parsed for tr in generate_batch(policy, contexts, max_len, None)]
        final = float(np.mean([po.answer == ep.gold_answer for ep, po in zip(episodes, outs)]))
    return EvalResult(step_acc, float(final), float(np.mean(formats)), float(np.mean(mem_lens)), answers)


# --- full loop ----------------------------------------------------------------


class PRPOTrainer:
    """Stateful driver: owns params, reference, optimiser, counters and history."""

    def __init__(self, cfg: TrainConfig, vocab: Vocab, seed: int = 0, params: Optional[PolicyParams] = None):
        self.cfg = cfg.validate()
        self.vocab = vocab
        ss = np.random.SeedSequence(seed)
        self._rollout_rng, self._cold_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        self.params = params if params is not None else PolicyParams.zeros(vocab)
        self.reference = ReferenceSnapshot.capture(self.params)
        self.opt = Adam(self.params.weights.shape, cfg.lr, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps)
        self.counters = CostCounters()
        self.buffer = TrajectoryBuffer()
        self.history: list = []
        self.updates = 0
        self.cold_start_history: list = []
        self.trajectory_log = None  # writable text stream for buffer entries

    def run_cold_start(self, episodes: Sequence[Episode]) -> None:
        pairs = oracle_pairs(episodes)
        opt = Adam(self.params.weights.shape, self.cfg.cold_start_lr, self.cfg.adam_b1, self.cfg.adam_b2, self.cfg.adam_eps)
        self.params, self.cold_start_history = cold_start(self.params, pairs, self.cfg.cold_start_epochs, self.cfg.cold_start_lr, opt)
        self.reference = ReferenceSnapshot.capture(self.params)

    def step(self, episodes: Sequence[Episode]) -> dict:
        """Roll out a batch of episodes, then apply one update."""
        cfg = self.cfg
        rolls = []
        for ep in episodes:
            r = rollout_phase(self.params, ep, cfg, self._rollout_rng, self.updates)
            self.buffer.extend(r.entries)
            self.counters.merge(r.counters)
            rolls.append(r)
        n_entries = len(self.buffer)
        if self.trajectory_log is not None:
            for e in self.buffer:
                self.trajectory_log.write(
                    f'{{"update":{self.updates + 1},"episode_id":"{e.episode_id}","step":{e.step},'
                    f'"advantage":{e.advantage!r},"trajectory":{e.trajectory.to_json()}}}\n'
                )
        self.params, st = grpo_update(self.params, self.buffer, self.reference, cfg, self.opt, self.updates + 1)
        self.updates += 1

        T = max(len(r.step_accuracy) for r in rolls)
        step_acc = [float(np.mean([r.step_accuracy[t] for r in rolls if t < len(r.step_accuracy)])) for t in range(T)]
        sel_entropy = [selection_entropy(p) for r in rolls for (_, p, _) in r.selections]
        rec = {
            "update": self.updates,
            "version": self.params.version,
            "mean_reward": float(np.mean([r.mean_reward for r in rolls])),
            "format_rate": float(np.mean([np.mean(r.step_format) for r in rolls])),
            "provisional_accuracy": step_acc,
            "final_accuracy_train": step_acc[-1],
            "mean_memory_len": float(np.mean([r.mean_memory_len for r in rolls])),
            "selection_entropy": float(np.mean(sel_entropy)) if sel_entropy else 0.0,
            "reward_breakdown": {k: float(np.mean([r.breakdown[k] for r in rolls])) for k in rolls[0].breakdown},
            "selections": [[[t, [float(x) for x in p], int(j)] for (t, p, j) in r.selections] for r in rolls],
            "buffer_entries": n_entries,
            "objective": st.objective,
            "kl": st.kl,
            "clip_fraction": st.clip_fraction,
            "grad_norm": st.grad_norm,
            "n_tokens": st.n_tokens,
            **self.counters.as_dict(),
        }
        self.history.append(rec)
        return rec


def split_streams(master_seed: int):
    """Independent episode-seed streams: (train, eval, cold start)."""
    return (iter_episode_seeds(master_seed, k) for k in (0, 1, 2))


def train(
    cfg: TrainConfig,
    env_spec: EpisodeSpec,
    seed: int = 0,
    eval_spec: Optional[EpisodeSpec] = None,
    callback=None,
    trajectory_log=None,
):
    """Optional cold start, then ``n_updates`` rollout/update rounds.

    Returns ``(trainer, history)``; history records carry greedy evaluation
    accuracy every ``eval_every`` updates (and at update 0).
    """
    env_spec.validate()
    trainer = PRPOTrainer(cfg, env_spec.vocab, seed)
    trainer.trajectory_log = trajectory_log
    train_seeds, eval_seeds, cold_seeds = split_streams(seed)
    eval_spec = eval_spec or env_spec
    eval_eps = [generate_episode(eval_spec, next(eval_seeds)) for _ in range(cfg.eval_episodes)]

    if cfg.cold_start:
        cold_eps = [generate_episode(env_spec, next(cold_seeds)) for _ in range(cfg.cold_start_episodes)]
        trainer.run_cold_start(cold_eps)

    def _eval(rec):
        res = evaluate(trainer.params, eval_eps, cfg.out_len)
        rec["eval_accuracy"] = res.final_accuracy
        rec["eval_step_accuracy"] = res.step_accuracy
        rec["eval_format_rate"] = res.format_rate
        rec["eval_memory_len"] = res.mean_memory_len
        return rec

    history = [_eval({"update": 0, "version": trainer.params.version, **trainer.counters.as_dict()})]
    if callback:
        callback(history[-1])
    n_updates = cfg.n_updates if cfg.rl else 0
    for u in range(1, n_updates + 1):
        batch = [generate_episode(env_spec, next(train_seeds)) for _ in range(cfg.batch_size)]
        rec = trainer.step(batch)
        if u % cfg.eval_every == 0 or u == n_updates:
            _eval(rec)
        history.append(rec)
        if callback:
            callback(rec)
        if cfg.stop_at_target and rec.get("eval_accuracy", -1.0) >= cfg.target_accuracy:
            break
    return trainer, history


def convergence_update(history: Sequence[dict], target: float) -> Optional[int]:
    """First update index whose greedy evaluation reaches ``target``."""
    for rec in history:
        if "eval_accuracy" in rec and rec["eval_accuracy"] >= target:
            return rec["update"]
    return None
