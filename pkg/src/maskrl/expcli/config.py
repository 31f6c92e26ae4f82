"""Experiment configuration: one documented YAML key-value tree.

Unknown keys anywhere in the tree are errors; silent typos in experiment
configs are the main reproducibility hazard. Every section has defaults, so
an empty file (or no file) is a valid desk-scale configuration.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..maskdqn import DqnConfig
from ..league import PfspConfig
from ..nnapprox import ApproximatorConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """A malformed or unknown configuration key/value."""


@dataclass
class EnvironmentSection:
    players: int = 3
    max_moves: int = 10_000
    opponent_epsilon: float = 0.05


@dataclass
class NetworkSection:
    static_hidden: tuple[int, ...] = (64,)
    recurrent_width: int = 64
    head_hidden: tuple[int, ...] = (128,)


@dataclass
class DqnSection:
    episodes: int = 2000
    batch: int = 32
    capacity: int = 100_000
    target_period: int = 1000
    gamma: float = 0.95
    alpha: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.1
    update_every: int = 1
    grad_clip: float = 10.0


@dataclass
class LeagueSection:
    p_self: float = 0.3
    z: float = 6.0
    window: int = 1000
    checkpoint_period: int = 5000
    exploiter_episodes: int | None = None
    exploiter_p_self: float = 0.0


@dataclass
class MasksSection:
    labels: tuple[str, ...] = ("win", "challenge", "lie", "bait")
    train: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)
    inference: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)


@dataclass
class EvalSection:
    games: int = 5000


@dataclass
class TabularSection:
    mdp_file: str | None = None
    states: int = 6
    actions: int = 3
    dims: int = 4
    gamma: float = 0.9
    reward_scale: float = 0.25
    mdp_seed: int = 0
    algo: str = "q"
    episodes: int = 20_000
    max_steps_per_episode: int = 100
    alpha0: float = 0.5
    rho: float = 0.6
    epsilon: float = 1.0
    mask: tuple[float, ...] = (1.0, 0.0, 1.0, 0.0)


@dataclass
class ExperimentConfig:
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    dqn: DqnSection = field(default_factory=DqnSection)
    league: LeagueSection = field(default_factory=LeagueSection)
    masks: MasksSection = field(default_factory=MasksSection)
    eval: EvalSection = field(default_factory=EvalSection)
    tabular: TabularSection = field(default_factory=TabularSection)

    def dqn_config(self, seed: int) -> DqnConfig:
        d = self.dqn
        return DqnConfig(
            episodes=d.episodes,
            batch_size=d.batch,
            capacity=d.capacity,
            target_period=d.target_period,
            gamma=d.gamma,
            alpha=d.alpha,
            seed=seed,
            epsilon_start=d.epsilon_start,
            epsilon_end=d.epsilon_end,
            epsilon_decay_fraction=d.epsilon_decay_fraction,
            update_every=d.update_every,
            grad_clip=d.grad_clip,
        )

    def pfsp_config(self) -> PfspConfig:
        league = self.league
        return PfspConfig(
            p_self=league.p_self,
            z=league.z,
            window=league.window,
            checkpoint_period=league.checkpoint_period,
            exploiter_episodes=league.exploiter_episodes,
            exploiter_p_self=league.exploiter_p_self,
            opponent_epsilon=self.environment.opponent_epsilon,
        )

    def net_config(self, static_dim: int, event_dim: int, n_actions: int,
                   n_dims: int, seed: int) -> ApproximatorConfig:
        net = self.network
        return ApproximatorConfig(
            static_dim=static_dim,
            event_dim=event_dim,
            n_actions=n_actions,
            n_dims=n_dims,
            static_hidden=net.static_hidden,
            recurrent_width=net.recurrent_width,
            head_hidden=net.head_hidden,
            seed=seed,
        )


_TUPLE_FIELDS = {"static_hidden", "head_hidden", "labels", "train", "inference", "mask"}


def _fill_section(obj, data: dict, path: str):
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            known = ", ".join(sorted(names))
            raise ConfigError(f"unknown key {path}{key!r} (known: {known})")
        if value is None and key not in ("mdp_file", "exploiter_episodes"):
            raise ConfigError(f"key {path}{key!r} must not be null")
        if key in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"key {path}{key!r} must be a list")
            value = tuple(value)
        setattr(obj, key, value)
    return obj


def parse_config(data: dict | None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if data is None:
        return cfg
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    sections = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    for key, value in data.items():
        if key not in sections:
            known = ", ".join(sorted(sections))
            raise ConfigError(f"unknown section {key!r} (known: {known})")
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        _fill_section(sections[key], value, f"{key}.")
    if len(cfg.masks.train) != len(cfg.masks.labels) or len(cfg.masks.inference) != len(
        cfg.masks.labels
    ):
        raise ConfigError("masks.train/inference must match masks.labels in length")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
