"""Per-step cascading reward and the terminal-only baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError
from .rollout import ParsedOutput, token_count

TCR = "TCR"
TR = "TR"


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 1.0
    beta: float = 0.005
    l_max: int = 1024
    mode: str = TCR

    def validate(self) -> "RewardConfig":
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("reward.alpha and reward.beta must be >= 0")
        if self.l_max < 1:
            raise ConfigError(f"reward.l_max must be positive, got {self.l_max}")
        if self.mode not in (TCR, TR):
            raise ConfigError(f"reward.mode must be TCR or TR, got {self.mode!r}")
        return self


@dataclass(frozen=True)
class RewardBreakdown:
    cons: int
    format: int
    mem_penalty: float
    total: float

    def as_dict(self) -> dict:
        return {"cons": self.cons, "format": self.format, "mem_penalty": self.mem_penalty, "total": self.total}


ZERO = RewardBreakdown(0, 0, 0.0, 0.0)


def consistency_reward(parsed: ParsedOutput, gold: int) -> int:
    return int(parsed.answer is not None and parsed.answer == gold)


def format_reward(parsed: ParsedOutput) -> int:
    return int(parsed.well_formed)


def mem_penalty(count: int, l_max: int) -> float:
    return float(max(0, count - l_max))


def step_reward(parsed: ParsedOutput, gold: int, cfg: RewardConfig) -> RewardBreakdown:
    cons = consistency_reward(parsed, gold)
    fmt = format_reward(parsed)
    pen = mem_penalty(token_count(parsed.memory_span), cfg.l_max)
    return RewardBreakdown(cons, fmt, pen, cfg.alpha * cons + fmt - cfg.beta * pen)


def assign_rewards(step_groups: Sequence[Sequence[ParsedOutput]], gold: int, cfg: RewardConfig) -> list:
    """Rewards for every trajectory of every step of one episode.

    In TR mode only the last step is scored; earlier steps get explicit zeros
    so that buffer sizes match between modes.
    """
    T = len(step_groups)
    out = []
    for t, group in enumerate(step_groups):
        if cfg.mode == TCR or t == T - 1:
            out.append([step_reward(p, gold, cfg) for p in group])
        else:
            out.append([ZERO] * len(group))
    return out


def reward_events(T: int, G: int, mode: str) -> int:
    """Number of reward evaluations that can be non-zero for one episode."""
    return T * G if mode == TCR else G
