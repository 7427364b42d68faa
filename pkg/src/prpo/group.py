"""Group-relative advantages and progressive state propagation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError

GREEDY = 0.0  # temperature sentinel: deterministic argmax selection


@dataclass(frozen=True)
class TemperatureSchedule:
    tau0: float = 1.0
    gamma: float = 0.9

    def validate(self) -> "TemperatureSchedule":
        if not self.tau0 > 0:
            raise ConfigError(f"schedule.tau0 must be positive, got {self.tau0}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"schedule.gamma must lie in (0, 1), got {self.gamma}")
        return self


def temperature(schedule: TemperatureSchedule, t: int) -> float:
    return schedule.tau0 * schedule.gamma**t


def group_advantages(rewards: Sequence[float], eps_std: float = 1e-8) -> np.ndarray:
    """Z-score rewards within the group (population std); constant groups give zeros.

    ``eps_std`` floors the standard deviation rather than being added to it, so
    any group whose spread exceeds it is normalised to unit std exactly.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ConfigError(f"group size must be >= 2, got {r.size}")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    centred = r - r.mean()
    return centred / max(r.std(), eps_std)


def selection_probs(advantages: Sequence[float], tau: float) -> np.ndarray:
    a = np.asarray(advantages, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericalError("non-finite advantages in selection")
    if not tau > 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    z = a / tau
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def select_memory(memories: Sequence, advantages: Sequence[float], tau: float, seed) -> int:
    """Index of the memory to propagate.

    ``tau == GREEDY`` picks the argmax (lowest index on ties); otherwise the
    index is drawn from :func:`selection_probs`.  ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    if len(memories) != len(advantages):
        raise ConfigError("memories and advantages must have equal length")
    if tau == GREEDY:
        return int(np.argmax(np.asarray(advantages, dtype=np.float64)))
    p = selection_probs(advantages, tau)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), len(p) - 1))


def selection_entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
