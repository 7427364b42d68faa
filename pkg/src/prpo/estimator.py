"""scikit-learn style wrapper around the trainer.

``X`` is always a sequence of :class:`~prpo.env.Episode` objects; targets
live inside the episodes, so ``y`` is accepted and ignored.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .env import Episode
from .errors import InputError
from .group import TemperatureSchedule
from .policy import PolicyParams
from .reward import RewardConfig
from .trainer import PRPOTrainer, TrainConfig, evaluate


def check_episodes(X, same_length: bool = True) -> list:
    """Validate an episode collection and return it as a list."""
    if isinstance(X, Episode):
        raise InputError("expected a sequence of Episode objects, got a single Episode")
    try:
        episodes = list(X)
    except TypeError:
        raise InputError(f"expected a sequence of Episode objects, got {type(X).__name__}") from None
    if not episodes:
        raise InputError("need at least one episode")
    bad = next((e for e in episodes if not isinstance(e, Episode)), None)
    if bad is not None:
        raise InputError(f"expected Episode objects, found {type(bad).__name__}")
    vocab = episodes[0].spec.vocab
    if any(e.spec.vocab != vocab for e in episodes):
        raise InputError("episodes must share one vocabulary layout")
    if same_length and len({e.num_segments for e in episodes}) > 1:
        raise InputError("episodes must all have the same number of segments")
    return episodes


class PRPOAgent(BaseEstimator):
    """Memory agent trained by cold start plus grouped policy optimisation.

    Parameters mirror :class:`~prpo.trainer.TrainConfig`.  ``fit`` uses the
    first ``cold_start_episodes`` episodes of ``X`` for the supervised warm
    start and draws RL batches from all of ``X`` in a seeded order.
    """

    def __init__(
        self,
        group_size=8,
        batch_size=16,
        n_updates=50,
        lr=0.02,
        clip_eps=0.2,
        kl_coef=0.0,
        alpha=1.0,
        beta=0.005,
        l_max=1024,
        reward_mode="TCR",
        psp=True,
        tau0=1.0,
        gamma=0.9,
        cold_start=True,
        cold_start_episodes=64,
        cold_start_epochs=15,
        cold_start_lr=0.1,
        rl=True,
        random_state=0,
    ):
        self.group_size = group_size
        self.batch_size = batch_size
        self.n_updates = n_updates
        self.lr = lr
        self.clip_eps = clip_eps
        self.kl_coef = kl_coef
        self.alpha = alpha
        self.beta = beta
        self.l_max = l_max
        self.reward_mode = reward_mode
        self.psp = psp
        self.tau0 = tau0
        self.gamma = gamma
        self.cold_start = cold_start
        self.cold_start_episodes = cold_start_episodes
        self.cold_start_epochs = cold_start_epochs
        self.cold_start_lr = cold_start_lr
        self.rl = rl
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return replace(
            TrainConfig(),
            group_size=self.group_size,
            batch_size=self.batch_size,
            n_updates=self.n_updates,
            lr=self.lr,
            clip_eps=self.clip_eps,
            kl_coef=self.kl_coef,
            reward=RewardConfig(self.alpha, self.beta, self.l_max, self.reward_mode),
            schedule=TemperatureSchedule(self.tau0, self.gamma),
            psp=self.psp,
            cold_start=self.cold_start,
            cold_start_episodes=self.cold_start_episodes,
            cold_start_epochs=self.cold_start_epochs,
            cold_start_lr=self.cold_start_lr,
            rl=self.rl,
        ).validate()

    def fit(self, X, y=None):
        episodes = check_episodes(X, same_length=False)
        cfg = self._train_config()
        vocab = episodes[0].spec.vocab
        trainer = PRPOTrainer(cfg, vocab, self.random_state)
        if cfg.cold_start:
            trainer.run_cold_start(episodes[: cfg.cold_start_episodes])
        if cfg.rl:
            order = np.random.default_rng(self.random_state)
            pool = []
            for _ in range(cfg.n_updates):
                batch = []
                while len(batch) < cfg.batch_size:
                    if not pool:
                        pool = list(order.permutation(len(episodes)))
                    batch.append(episodes[pool.pop()])
                trainer.step(batch)
        self.params_ = trainer.params
        self.history_ = trainer.history
        self.counters_ = trainer.counters.as_dict()
        self.vocab_ = vocab
        return self

    def _check_input(self, X) -> list:
        check_is_fitted(self, "params_")
        episodes = check_episodes(X)
        if episodes[0].spec.vocab != self.vocab_:
            raise InputError("episodes use a different vocabulary than the fitted agent")
        return episodes

    def predict_provisional(self, X) -> np.ndarray:
        """``(n_episodes, T)`` greedy provisional answers, ``-1`` where absent."""
        episodes = self._check_input(X)
        return evaluate(self.params_, episodes, self._train_config().out_len).answers

    def predict(self, X) -> np.ndarray:
        """Final-step answers, ``-1`` where the output had no valid answer."""
        return self.predict_provisional(X)[:, -1]

    def score(self, X, y=None) -> float:
        episodes = self._check_input(X)
        gold = np.array([e.gold_answer for e in episodes])
        return float(np.mean(self.predict(episodes) == gold))

    @property
    def policy_(self) -> PolicyParams:
        check_is_fitted(self, "params_")
        return self.params_
