"""Grouped policy optimisation with progressive state propagation and per-step rewards.

A desk-scale reinforcement-learning engine: a synthetic segmented-evidence
environment, a linear-softmax token policy, and a trainer that carries one
sampled memory state forward between segments.
"""

from .config import RunConfig, load_config
from .env import Episode, EpisodeSpec, ScriptedAgent, Vocab, featurize, generate_episode, oracle_trace
from .errors import ConfigError, InputError, NumericalError
from .estimator import PRPOAgent, check_episodes
from .group import GREEDY, TemperatureSchedule, group_advantages, select_memory, selection_probs, temperature
from .policy import PolicyParams, ReferenceSnapshot, grad_logprob, kl_divergence, logits, logprob
from .reward import TCR, TR, RewardBreakdown, RewardConfig, assign_rewards, step_reward
from .rollout import GenContext, ParsedOutput, Trajectory, generate, make_context, parse_output, token_count
from .trainer import CostCounters, PRPOTrainer, TrainConfig, evaluate, grpo_update, rollout_phase, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CostCounters",
    "Episode",
    "EpisodeSpec",
    "GREEDY",
    "GenContext",
    "InputError",
    "NumericalError",
    "PRPOAgent",
    "PRPOTrainer",
    "ParsedOutput",
    "PolicyParams",
    "ReferenceSnapshot",
    "RewardBreakdown",
    "RewardConfig",
    "RunConfig",
    "ScriptedAgent",
    "TCR",
    "TR",
    "TemperatureSchedule",
    "TrainConfig",
    "Trajectory",
    "Vocab",
    "assign_rewards",
    "check_episodes",
    "evaluate",
    "featurize",
    "generate",
    "generate_episode",
    "grad_logprob",
    "group_advantages",
    "grpo_update",
    "kl_divergence",
    "load_config",
    "logits",
    "logprob",
    "make_context",
    "oracle_trace",
    "parse_output",
    "rollout_phase",
    "select_memory",
    "selection_probs",
    "step_reward",
    "temperature",
    "token_count",
    "train",
]
