"""Central finite-difference checks for the policy and update gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EpisodeSpec, generate_episode
from .policy import PolicyParams, dense_features, grad_logprob, logprob
from .rollout import generate_batch, make_context
from .trainer import BufferEntry, _entries_batch, batch_log_probs, clipped_objective

H = 1e-5
TOL = 1e-5
SMALL_SPEC = EpisodeSpec(num_segments=1, segment_len=4, vocab_size=6, num_choices=2, evidence_copies=1)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _probe_coords(rng, n_rows, active_cols, n):
    """Random weight entries restricted to feature columns that are non-zero somewhere."""
    cols = np.flatnonzero(active_cols)
    flat = rng.choice(n_rows * len(cols), size=min(n, n_rows * len(cols)), replace=False)
    return [(int(i // len(cols)), int(cols[i % len(cols)])) for i in flat]


def numeric_grad(f, w: np.ndarray, coords, h: float = H) -> np.ndarray:
    out = np.empty(len(coords))
    for k, c in enumerate(coords):
        wp = w.copy()
        wm = w.copy()
        wp[c] += h
        wm[c] -= h
        out[k] = (f(wp) - f(wm)) / (2 * h)
    return out


@dataclass
class CheckReport:
    name: str
    cases: int
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOL

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: cases={self.cases} max_rel_error={self.max_rel_error:.3e} tol={TOL:.0e}"


def _random_case(rng, spec):
    vocab = spec.vocab
    params = PolicyParams(rng.normal(0.0, 0.5, (vocab.size, 5 * vocab.size)), vocab)
    ep = generate_episode(spec, int(rng.integers(2**31)))
    memory = tuple(int(x) for x in rng.integers(0, vocab.K, size=int(rng.integers(0, 3))))
    ctx = make_context(ep.episode_id, 0, ep.query, ep.segments[0], memory)
    return params, ctx


def check_grad_logprob(seed: int = 0, cases: int = 100, n_coords: int = 40, corrupt: bool = False) -> CheckReport:
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(cases):
        params, ctx = _random_case(rng, SMALL_SPEC)
        vocab = params.vocab
        tokens = [int(t) for t in rng.integers(0, vocab.size, size=3)]
        g = grad_logprob(params, ctx, tokens)
        if corrupt:
            g = g * 1.01
        active = dense_features(vocab, ctx, tokens).any(axis=0)
        coords = _probe_coords(rng, vocab.size, active, n_coords)

        def f(w):
            return logprob(PolicyParams(w, vocab), ctx, tokens)[0]

        num = numeric_grad(f, params.weights, coords)
        worst = max(worst, rel_error(np.array([g[c] for c in coords]), num))
    return CheckReport("grad_logprob", cases, worst)


def check_clipped_objective(seed: int = 0, cases: int = 100, n_coords: int = 40, corrupt: bool = False) -> CheckReport:
    """Gradient of the clipped surrogate (with KL term) over a 10-entry buffer.

    The buffer is sampled under one parameter set and the objective evaluated
    at a perturbed one, so ratios differ from 1 and some are clipped.
    """
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(cases):
        old, ctx = _random_case(rng, SMALL_SPEC)
        vocab = old.vocab
        seeds = rng.integers(0, 2**31, size=10)
        trajs = generate_batch(old, [ctx] * 10, 4, seeds)
        entries = [BufferEntry(tr, float(rng.normal()), 0, "gc") for tr in trajs]
        new = PolicyParams(old.weights + rng.normal(0.0, 0.3, old.weights.shape), vocab)
        batch, adv, old_lp = _entries_batch(old, entries)
        ref_lp = batch_log_probs(old, batch)[1]
        clip_eps, kl_coef = 0.2, 0.1
        _, g, _ = clipped_objective(new, batch, adv, old_lp, ref_lp, clip_eps, kl_coef)
        if corrupt:
            g = g * 1.01
        coords = _probe_coords(rng, vocab.size, batch.features().any(axis=0), n_coords)

        def f(w):
            return clipped_objective(PolicyParams(w, vocab), batch, adv, old_lp, ref_lp, clip_eps, kl_coef)[0]

        num = numeric_grad(f, new.weights, coords)
        worst = max(worst, rel_error(np.array([g[c] for c in coords]), num))
    return CheckReport("clipped_objective", cases, worst)


def run_all(seed: int = 0, cases: int = 100, corrupt: bool = False) -> list:
    return [
        check_grad_logprob(seed, cases, corrupt=corrupt),
        check_clipped_objective(seed, cases, corrupt=corrupt),
    ]
