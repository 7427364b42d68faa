from dataclasses import replace

import numpy as np
import pytest

from prpo.env import EpisodeSpec, ScriptedAgent, generate_episode
from prpo.errors import ConfigError, NumericalError
from prpo.group import TemperatureSchedule
from prpo.policy import PolicyParams, ReferenceSnapshot, logprob
from prpo.reward import TR, RewardConfig
from prpo.trainer import (
    Adam,
    BufferEntry,
    CostCounters,
    PRPOTrainer,
    TrainConfig,
    TrajectoryBuffer,
    _entries_batch,
    _terminal_credit,
    batch_log_probs,
    build_batch,
    clipped_objective,
    cold_start,
    convergence_update,
    evaluate,
    grpo_update,
    oracle_pairs,
    rollout_phase,
    train,
)

from conftest import random_params


@pytest.fixture(scope="module")
def warm():
    """Cold-started policy on the default environment."""
    spec = EpisodeSpec()
    eps = [generate_episode(spec, s) for s in range(64)]
    params, _ = cold_start(PolicyParams.zeros(spec.vocab), oracle_pairs(eps), 15, 0.1)
    return spec, params


def rollout(params, spec, cfg, seed=0, ep_seed=3):
    return rollout_phase(params, generate_episode(spec, ep_seed), cfg, np.random.default_rng(seed))


# --- rollout phase and counters -------------------------------------------


def test_prefill_counts(warm):
    spec, params = warm
    psp = rollout(params, spec, TrainConfig())
    branch = rollout(params, spec, TrainConfig(psp=False))
    assert psp.counters.prefill_events == 4
    assert branch.counters.prefill_events == 1 + 3 * 8 == 25


@pytest.mark.parametrize("T, G", [(1, 2), (2, 3), (5, 4)])
def test_prefill_formula(T, G):
    spec = EpisodeSpec(num_segments=T)
    params = PolicyParams.zeros(spec.vocab)
    cfg = TrainConfig(group_size=G, max_len=6)
    assert rollout(params, spec, cfg).counters.prefill_events == T
    assert rollout(params, spec, replace(cfg, psp=False)).counters.prefill_events == 1 + (T - 1) * G


def test_reward_events(warm):
    spec, params = warm
    assert rollout(params, spec, TrainConfig()).counters.reward_events == 32
    assert rollout(params, spec, TrainConfig(reward=RewardConfig(mode=TR))).counters.reward_events == 8


@pytest.mark.parametrize("psp", [True, False])
@pytest.mark.parametrize("mode", ["TCR", "TR"])
def test_buffer_has_t_times_g_entries(warm, psp, mode):
    spec, params = warm
    r = rollout(params, spec, TrainConfig(psp=psp, reward=RewardConfig(mode=mode)))
    assert len(r.entries) == 32
    assert sorted({e.step for e in r.entries}) == [0, 1, 2, 3]


def test_decode_events_count_tokens(warm):
    spec, params = warm
    r = rollout(params, spec, TrainConfig())
    assert r.counters.decode_events == sum(len(e.trajectory.tokens) for e in r.entries)


def test_psp_propagates_one_memory(warm):
    spec, params = warm
    r = rollout(params, spec, TrainConfig(), seed=4)
    by_step = {}
    for e in r.entries:
        by_step.setdefault(e.step, []).append(e.trajectory)
    for t in range(1, 4):
        memories = {tr.context.memory for tr in by_step[t]}
        assert len(memories) == 1
        chosen = r.selections[t - 1][2]
        assert memories == {by_step[t - 1][chosen].parsed.memory_span}


def test_branch_chains_keep_own_memory(warm):
    spec, params = warm
    r = rollout(params, spec, TrainConfig(psp=False), seed=4)
    steps = [[e.trajectory for e in r.entries if e.step == t] for t in range(4)]
    for t in range(1, 4):
        for i in range(8):
            assert steps[t][i].context.memory == steps[t - 1][i].parsed.memory_span


def test_tcr_advantages_are_per_step_zscores(warm):
    spec, params = warm
    r = rollout(params, spec, TrainConfig(), seed=2)
    for t in range(4):
        adv = np.array([e.advantage for e in r.entries if e.step == t])
        assert abs(adv.mean()) < 1e-12
        assert adv.std() == 0 or abs(adv.std() - 1) < 1e-9


def test_terminal_credit_psp_lineage():
    final = np.array([1.0, -1.0, 0.5, -0.5])
    parents = [[2, 2, 2, 2], [1, 1, 1, 1]]  # step0 -> index 2, step1 -> index 1
    credit = _terminal_credit(final, parents, 4)
    assert credit[2].tolist() == final.tolist()
    assert credit[1].tolist() == [0.0, final.mean(), 0.0, 0.0]
    assert credit[0].tolist() == [0.0, 0.0, final.mean(), 0.0]


def test_terminal_credit_branch_lineage():
    final = np.array([1.0, -1.0, 0.5])
    parents = [[0, 1, 2]]
    credit = _terminal_credit(final, parents, 3)
    assert credit[0].tolist() == final.tolist()


def test_tr_mode_broadcasts_terminal_advantage_in_branch_mode(warm):
    spec, params = warm
    r = rollout(params, spec, TrainConfig(psp=False, reward=RewardConfig(mode=TR)), seed=5)
    final = [e.advantage for e in r.entries if e.step == 3]
    for t in range(3):
        assert [e.advantage for e in r.entries if e.step == t] == final


def test_global_temperature_schedule(warm):
    spec, params = warm
    cfg = TrainConfig(schedule_per_episode=False, schedule=TemperatureSchedule(1.0, 0.5))
    ep = generate_episode(spec, 3)
    r = rollout_phase(params, ep, cfg, np.random.default_rng(0), global_step=3)
    for t, p, _ in r.selections:
        adv = np.array([e.advantage for e in r.entries if e.step == t - 1])
        ref = np.exp((adv - adv.max()) / 0.125)
        assert np.allclose(p, ref / ref.sum())


# --- update -----------------------------------------------------------------


def fill_buffer(params, spec, cfg, n=2):
    buf = TrajectoryBuffer()
    rng = np.random.default_rng(0)
    for s in range(n):
        buf.extend(rollout_phase(params, generate_episode(spec, s), cfg, rng).entries)
    return buf


def test_first_update_is_on_policy(warm):
    spec, params = warm
    cfg = TrainConfig()
    buf = fill_buffer(params, spec, cfg)
    batch, adv, old = _entries_batch(params, buf.entries)
    _, lp = batch_log_probs(params, batch)
    assert np.array_equal(lp, old)
    _, _, st = clipped_objective(params, batch, adv, old, old, cfg.clip_eps, 0.0)
    assert (st["ratio"] == 1.0).all()
    assert st["surrogate"] == pytest.approx(adv.mean(), abs=1e-15)
    assert st["clip_fraction"] == 0.0
    new, stats = grpo_update(params, buf, ReferenceSnapshot.capture(params), cfg, Adam(params.weights.shape, cfg.lr))
    assert stats.ratio_min == stats.ratio_max == 1.0
    assert new.version == params.version + 1
    assert len(buf) == 0


def test_zero_advantages_leave_weights(warm):
    spec, params = warm
    cfg = TrainConfig()
    buf = fill_buffer(params, spec, cfg)
    for e in buf.entries:
        e.advantage = 0.0
    new, stats = grpo_update(params, buf, ReferenceSnapshot.capture(params), cfg, Adam(params.weights.shape, cfg.lr))
    assert stats.grad_norm == 0.0
    assert np.array_equal(new.weights, params.weights)
    assert new.version == params.version + 1


def test_empty_buffer_rejected(warm):
    spec, params = warm
    with pytest.raises(ConfigError):
        grpo_update(params, TrajectoryBuffer(), ReferenceSnapshot.capture(params), TrainConfig(), Adam((1,), 0.1))


def test_clipped_objective_finite_differences(tiny_spec):
    """Full central differences of the clipped objective on a 10-entry buffer."""
    rng = np.random.default_rng(9)
    voc = tiny_spec.vocab
    old = random_params(voc, rng)
    ep = generate_episode(tiny_spec, 1)
    from prpo.rollout import generate_batch, make_context

    ctx = make_context(ep.episode_id, 0, ep.query, ep.segments[0], ())
    trajs = generate_batch(old, [ctx] * 10, 4, range(10))
    entries = [BufferEntry(tr, float(a), 0, "x") for tr, a in zip(trajs, rng.normal(size=10))]
    batch, adv, old_lp = _entries_batch(old, entries)
    ref_lp = batch_log_probs(old, batch)[1]
    new = PolicyParams(old.weights + rng.normal(0, 0.3, old.weights.shape), voc)

    def f(w):
        return clipped_objective(PolicyParams(w, voc), batch, adv, old_lp, ref_lp, 0.2, 0.05)[0]

    _, g, st = clipped_objective(new, batch, adv, old_lp, ref_lp, 0.2, 0.05)
    assert 0 < st["clip_fraction"] < 1
    num = np.zeros_like(g)
    h = 1e-5
    for idx in np.ndindex(g.shape):
        wp, wm = new.weights.copy(), new.weights.copy()
        wp[idx] += h
        wm[idx] -= h
        num[idx] = (f(wp) - f(wm)) / (2 * h)
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


@pytest.mark.filterwarnings("ignore:invalid value")
def test_non_finite_gradient_aborts(warm):
    spec, params = warm
    cfg = TrainConfig()
    buf = fill_buffer(params, spec, cfg, n=1)
    buf.entries[0].advantage = np.inf
    with pytest.raises(NumericalError) as err:
        grpo_update(params, buf, ReferenceSnapshot.capture(params), cfg, Adam(params.weights.shape, cfg.lr), step=7)
    assert err.value.step == 7
    assert not np.isfinite(err.value.norm)


def test_adam_bias_correction_first_step():
    opt = Adam((3,), 0.1)
    g = np.array([2.0, -0.5, 0.0])
    w = opt.step(np.zeros(3), g)
    # m_hat = g, v_hat = g^2 -> step = lr * sign(g) (up to eps)
    assert np.allclose(w, [0.1, -0.1, 0.0], atol=1e-8)


# --- cold start -------------------------------------------------------------


def test_cold_start_null_step(spec):
    eps = [generate_episode(spec, 0)]
    p0 = PolicyParams.zeros(spec.vocab)
    p1, _ = cold_start(p0, oracle_pairs(eps), 1, 0.0)
    assert np.array_equal(p1.weights, p0.weights)


def test_cold_start_loss_nonincreasing(spec):
    eps = [generate_episode(spec, s) for s in range(16)]
    pairs = oracle_pairs(eps)
    assert len(pairs) == 64
    _, hist = cold_start(PolicyParams.zeros(spec.vocab), pairs, 60, 0.1)
    loss = -np.array(hist)
    assert (np.diff(loss) <= 1e-6).all()


def test_cold_start_needs_traces(spec):
    with pytest.raises(ConfigError):
        cold_start(PolicyParams.zeros(spec.vocab), [], 1, 0.1)


def test_cold_start_format_on_held_out(warm):
    spec, params = warm
    held = [generate_episode(spec, 10**6 + s) for s in range(200)]
    assert evaluate(params, held).format_rate >= 0.95


def test_supervised_gradient_matches_logprob(warm):
    spec, params = warm
    pairs = oracle_pairs([generate_episode(spec, 1)])
    batch = build_batch(spec.vocab, pairs)
    from prpo.trainer import supervised_objective

    mean_lp, _ = supervised_objective(params, batch)
    direct = np.mean(np.concatenate([logprob(params, c, t)[1] for c, t in pairs]))
    assert mean_lp == pytest.approx(direct, abs=1e-12)


# --- evaluate and train ------------------------------------------------------


def test_scripted_agent_upper_bound():
    for T in (1, 4, 6):
        spec = EpisodeSpec(num_segments=T)
        eps = [generate_episode(spec, s) for s in range(100)]
        res = evaluate(ScriptedAgent(spec.vocab), eps)
        for k, ep in enumerate(eps):
            assert (res.answers[k, ep.evidence_segment :] == ep.gold_answer).all()


def test_untrained_policy_not_above_chance(spec):
    eps = [generate_episode(spec, s) for s in range(200)]
    res = evaluate(PolicyParams.zeros(spec.vocab), eps, 64)
    # 200 draws at p = 1/4 have sd ~0.031
    assert res.final_accuracy <= 0.25 + 3 * 0.031
    assert max(res.step_accuracy) <= 0.25 + 3 * 0.031


def test_evaluate_rejects_mixed_lengths():
    a = generate_episode(EpisodeSpec(num_segments=2), 0)
    b = generate_episode(EpisodeSpec(num_segments=3), 0)
    with pytest.raises(ConfigError):
        evaluate(PolicyParams.zeros(a.spec.vocab), [a, b])


def test_final_answer_pass_switch(warm):
    spec, params = warm
    eps = [generate_episode(spec, s) for s in range(50)]
    off = evaluate(params, eps)
    on = evaluate(params, eps, final_answer_pass=True)
    assert off.step_accuracy == on.step_accuracy
    assert 0.0 <= on.final_accuracy <= 1.0


SMALL = TrainConfig(batch_size=4, n_updates=6, eval_every=3, eval_episodes=40, cold_start_episodes=16)


def test_zero_lr_is_flat():
    spec = EpisodeSpec()
    for seed in range(2):
        _, hist = train(replace(SMALL, lr=0.0), spec, seed)
        evals = [r["eval_accuracy"] for r in hist if "eval_accuracy" in r]
        assert len(set(evals)) == 1


def test_train_records_and_counters():
    spec = EpisodeSpec()
    trainer, hist = train(SMALL, spec, 0)
    assert [r["update"] for r in hist] == list(range(7))
    upd = hist[1:]
    assert all(r["buffer_entries"] == 4 * 4 * 8 for r in upd)  # every trajectory is in exactly one update
    assert [r["version"] for r in upd] == [hist[0]["version"] + k for k in range(1, 7)]
    for key in ("prefill_events", "decode_events", "reward_events"):
        vals = [r[key] for r in hist]
        assert vals == sorted(vals)
    assert hist[-1]["prefill_events"] == 6 * 4 * 4
    assert hist[-1]["reward_events"] == 6 * 4 * 4 * 8
    assert len(hist[1]["provisional_accuracy"]) == 4
    assert all(len(sel) == 3 for sel in hist[1]["selections"])


def test_train_is_deterministic():
    spec = EpisodeSpec()
    _, a = train(SMALL, spec, 3)
    _, b = train(SMALL, spec, 3)
    assert a == b


def test_trainer_rejects_tiny_group():
    with pytest.raises(ConfigError):
        PRPOTrainer(TrainConfig(group_size=1), EpisodeSpec().vocab)
    PRPOTrainer(TrainConfig(group_size=1, rl=False), EpisodeSpec().vocab)


def test_convergence_update():
    hist = [{"update": 0, "eval_accuracy": 0.3}, {"update": 5}, {"update": 10, "eval_accuracy": 0.85}]
    assert convergence_update(hist, 0.8) == 10
    assert convergence_update(hist, 0.9) is None


def test_stop_at_target():
    spec = EpisodeSpec()
    cfg = replace(SMALL, n_updates=50, eval_every=1, stop_at_target=True, target_accuracy=0.0)
    _, hist = train(cfg, spec, 0)
    assert len(hist) == 2


def test_cost_counter_merge():
    a, b = CostCounters(), CostCounters()
    a.prefill("x")
    b.prefill("x")
    b.prefill("y")
    a.decode(3)
    b.reward_events += 2
    a.merge(b)
    assert a.as_dict() == {"prefill_events": 2, "decode_events": 3, "reward_events": 2}
