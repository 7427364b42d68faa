"""Flat ``section.key = value`` run configuration.

An empty file gives the default run.  Keys map onto :class:`EpisodeSpec`,
:class:`TrainConfig`, :class:`RewardConfig` and :class:`TemperatureSchedule`
fields plus a few run-level settings::

    # comments and blank lines are ignored
    env.num_segments = 4
    train.group_size = 8
    reward.mode = TR
    train.mode_psp = false

A key without a dot is accepted when exactly one dotted key ends with it
(``mode_psp`` resolves to ``train.mode_psp``).
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .env import EpisodeSpec
from .errors import ConfigError
from .group import TemperatureSchedule
from .reward import RewardConfig
from .trainer import TrainConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class RunConfig:
    env: EpisodeSpec = field(default_factory=EpisodeSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0
    output_dir: str = "runs"
    run_name: str = "default"
    eval_segments: Optional[int] = None  # T for evaluation episodes; None = env.num_segments

    def validate(self) -> "RunConfig":
        self.env.validate()
        self.train.validate()
        if self.eval_segments is not None and self.eval_segments < 1:
            raise ConfigError(f"run.eval_segments must be >= 1, got {self.eval_segments}")
        return self

    @property
    def eval_spec(self) -> EpisodeSpec:
        if self.eval_segments is None:
            return self.env
        return replace(self.env, num_segments=self.eval_segments)


# key -> (owner, attribute, type)
def _key_table() -> dict:
    table = {}
    hints = typing.get_type_hints(EpisodeSpec)
    for f in fields(EpisodeSpec):
        table[f"env.{f.name}"] = ("env", f.name, hints[f.name])
    hints = typing.get_type_hints(RewardConfig)
    for f in fields(RewardConfig):
        table[f"reward.{f.name}"] = ("reward", f.name, hints[f.name])
    hints = typing.get_type_hints(TemperatureSchedule)
    for f in fields(TemperatureSchedule):
        table[f"schedule.{f.name}"] = ("schedule", f.name, hints[f.name])
    table["schedule.per_episode"] = ("train", "schedule_per_episode", bool)
    hints = typing.get_type_hints(TrainConfig)
    for f in fields(TrainConfig):
        if f.name in ("reward", "schedule", "schedule_per_episode"):
            continue
        name = "mode_psp" if f.name == "psp" else f.name
        table[f"train.{name}"] = ("train", f.name, hints[f.name])
    hints = typing.get_type_hints(RunConfig)
    for name in ("master_seed", "output_dir", "run_name", "eval_segments"):
        table[f"run.{name}"] = ("run", name, hints[name])
    return table


KEYS = _key_table()


def resolve_key(key: str) -> str:
    key = key.strip()
    if key in KEYS:
        return key
    if "." not in key:
        hits = [k for k in KEYS if k.split(".", 1)[1] == key]
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise ConfigError(f"{key}: ambiguous key, use one of {', '.join(sorted(hits))}")
    raise ConfigError(f"{key}: unknown configuration key")


def _coerce(key: str, raw: str, typ):
    raw = raw.strip()
    args = typing.get_args(typ)
    if type(None) in args:
        if raw.lower() in ("none", "null", ""):
            return None
        typ = next(a for a in args if a is not type(None))
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


def parse_pairs(lines, source: str = "<config>") -> list:
    """``(key, raw value)`` pairs from config text lines."""
    pairs = []
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = text.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def apply_pairs(cfg: RunConfig, pairs) -> RunConfig:
    env, train = {}, {}
    reward, schedule, run = {}, {}, {}
    owners = {"env": env, "train": train, "reward": reward, "schedule": schedule, "run": run}
    for key, raw in pairs:
        full = resolve_key(key)
        owner, attr, typ = KEYS[full]
        owners[owner][attr] = _coerce(full, raw, typ)
    tc = replace(
        cfg.train,
        reward=replace(cfg.train.reward, **reward),
        schedule=replace(cfg.train.schedule, **schedule),
        **train,
    )
    return replace(cfg, env=replace(cfg.env, **env), train=tc, **run)


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        cfg = apply_pairs(cfg, parse_pairs(lines, str(path)))
    cfg = apply_pairs(cfg, parse_pairs(overrides, "--set"))
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    """Every key with its resolved value, one per line (re-loadable)."""
    out = []
    for key, (owner, attr, _) in sorted(KEYS.items()):
        if owner == "env":
            v = getattr(cfg.env, attr)
        elif owner == "reward":
            v = getattr(cfg.train.reward, attr)
        elif owner == "schedule":
            v = getattr(cfg.train.schedule, attr)
        elif owner == "train":
            v = getattr(cfg.train, attr)
        else:
            v = getattr(cfg, attr)
        if isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{key} = {v}")
    return "\n".join(out) + "\n"
