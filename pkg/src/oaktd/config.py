"""Experiment configuration: per-task defaults and a flat ``key = value`` format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .envs import ENV_IDS
from .features import TileCodingSpec
from .learners import StepSchedule

ALGOS = ("oaktd", "oktd", "osktd", "tiletd")


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending entry when there is one."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    algo: str = "oaktd"
    total_steps: int = 100_000
    eval_every: int = 1000
    eval_episodes: int = 5
    eval_cap: int = 2000
    seeds: tuple[int, ...] = (0,)
    mu1: float = 0.1
    sigma1: float = 1.0
    sigma2: float = 1.0
    mu2: float = 1.0
    alpha0: float = 0.05
    alpha_decay: float = 0.99999
    beta0: float = 0.01
    beta_decay: float = 0.999999
    epsilon0: float = 1.0
    epsilon_decay: float = 0.9999
    tilings: int = 16
    tiles: int = 256
    radius: float = 1000.0
    train_cap: int = 0  # 0 means episodes are not truncated during training

    def __post_init__(self):
        if self.env not in ENV_IDS:
            raise ConfigError(f"unknown env {self.env!r}; valid: {', '.join(ENV_IDS)}", "env")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; valid: {', '.join(ALGOS)}", "algo")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0", "total_steps")
        for key in ("eval_every", "eval_episodes", "eval_cap", "tilings", "tiles"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive", key)
        for key in ("mu1", "sigma1", "sigma2", "mu2", "alpha0", "alpha_decay", "beta0", "beta_decay",
                    "epsilon0", "epsilon_decay", "radius"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key)
        for key in ("alpha_decay", "beta_decay", "epsilon_decay"):
            if getattr(self, key) > 1:
                raise ConfigError(f"{key} must be <= 1", key)
        if self.epsilon0 > 1:
            raise ConfigError("epsilon0 must be <= 1", "epsilon0")
        if self.train_cap < 0:
            raise ConfigError("train_cap must be >= 0", "train_cap")

    @property
    def alpha(self) -> StepSchedule:
        return StepSchedule(self.alpha0, self.alpha_decay)

    @property
    def beta(self) -> StepSchedule:
        return StepSchedule(self.beta0, self.beta_decay)

    @property
    def epsilon(self) -> StepSchedule:
        return StepSchedule(self.epsilon0, self.epsilon_decay)

    def tile_spec(self, state_dim: int) -> TileCodingSpec:
        return TileCodingSpec(self.tilings, self.tiles, state_dim)


# Per-task hyperparameters. Puddle World's 512-tile grid is not a square, so
# the nearest square grid (23 x 23) is used instead.
ENV_DEFAULTS: dict[str, dict] = {
    "mountain-car": dict(
        mu1=0.1, sigma1=1.0, sigma2=1.0, mu2=1.0,
        alpha0=0.05, alpha_decay=0.99999, beta0=0.01, beta_decay=0.999999,
        tiles=256, eval_cap=2000,
    ),
    "acrobot": dict(
        mu1=0.3, sigma1=1.0, sigma2=1.0, mu2=1.0,
        alpha0=0.1, alpha_decay=0.99999, beta0=0.001, beta_decay=0.999999,
        tiles=4096, eval_cap=2000,
    ),
    "cartpole": dict(
        mu1=0.3, sigma1=1.0, sigma2=1.0, mu2=1.0,
        alpha0=0.1, alpha_decay=0.999999, beta0=0.01, beta_decay=0.9999999,
        tiles=4096, eval_cap=500, train_cap=500,
    ),
    "puddle-world": dict(
        mu1=0.1, sigma1=1.0, sigma2=0.1, mu2=1.4,
        alpha0=0.1, alpha_decay=0.99999, beta0=0.01, beta_decay=0.999999,
        tiles=529, eval_cap=2000,
    ),
}

KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))
_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def default_config(env: str, **overrides) -> ExperimentConfig:
    if env not in ENV_DEFAULTS:
        raise ConfigError(f"unknown env {env!r}; valid: {', '.join(ENV_IDS)}", "env")
    return ExperimentConfig(env=env, **{**ENV_DEFAULTS[env], **overrides})


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"3"``, ``"0,2,5"`` or an inclusive range ``"0..9"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = tuple(range(int(lo), int(hi) + 1))
        else:
            seeds = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}", "seeds") from None
    if not seeds:
        raise ConfigError(f"empty seed list {text!r}", "seeds")
    return seeds


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if key == "seeds":
            return parse_seeds(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})", key) from None


def parse_pairs(lines) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` starts a comment) into raw strings."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    return pairs


def parse_config(path=None, overrides=(), **flags) -> ExperimentConfig:
    """Resolve a config from an optional file, explicit flags and ``key=value`` overrides.

    Precedence, lowest first: task defaults, file, flags, overrides.
    """
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(parse_pairs(Path(path).read_text().splitlines()))
    raw.update({k: str(v) for k, v in flags.items() if v is not None})
    raw.update(parse_pairs(overrides))
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}; valid keys: {', '.join(KEYS)}", unknown[0])
    if "env" not in raw:
        raise ConfigError("missing required key 'env'", "env")
    values = {key: _convert(key, value) for key, value in raw.items()}
    env = values.pop("env")
    return default_config(env, **values)


def serialize(config: ExperimentConfig) -> str:
    lines = []
    for key in KEYS:
        value = getattr(config, key)
        if key == "seeds":
            value = ",".join(str(s) for s in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
