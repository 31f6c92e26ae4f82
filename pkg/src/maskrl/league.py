"""League play: champion checkpoints, main exploiters, prioritized
fictitious self-play opponent sampling, and sliding-window win tracking.

Champions train against a mix of themselves (probability p per opponent slot)
and league entries drawn proportionally to f(win rate) = (1 - x)^z, which
concentrates play on the opponents the learner loses to. Every
checkpoint_period episodes the champion is frozen into the league and a fresh
exploiter is trained against the league snapshot, then added as well.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .maskdqn import DqnConfig, EpisodeMetrics, TrainResult, train
from .nnapprox import ApproximatorConfig, NetworkParams, init_params, params_fingerprint
from .rlcore import StrategyMask

__all__ = [
    "LeagueEntry",
    "LeagueRoster",
    "WinRateTracker",
    "PfspConfig",
    "pfsp_weight",
    "pfsp_sample_opponents",
    "PfspHook",
    "priority_refresh_games",
    "LeagueTrainResult",
    "run_league_training",
]


@dataclass(frozen=True)
class LeagueEntry:
    """A frozen agent snapshot living in the league."""

    entry_id: str
    kind: str  # "champion_checkpoint" | "main_exploiter"
    params: NetworkParams
    creation_episode: int

    def __post_init__(self) -> None:
        if self.kind not in ("champion_checkpoint", "main_exploiter"):
            raise ValueError(f"unknown entry kind {self.kind!r}")


class LeagueRoster:
    """Append-only collection of league entries."""

    def __init__(self):
        self._entries: list[LeagueEntry] = []
        self._by_id: dict[str, LeagueEntry] = {}

    def add(self, entry: LeagueEntry) -> None:
        if entry.entry_id in self._by_id:
            raise ValueError(f"duplicate league entry id {entry.entry_id!r}")
        self._entries.append(entry)
        self._by_id[entry.entry_id] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def entries(self) -> tuple[LeagueEntry, ...]:
        return tuple(self._entries)

    def get(self, entry_id: str) -> LeagueEntry:
        return self._by_id[entry_id]

    def ids(self) -> tuple[str, ...]:
        return tuple(e.entry_id for e in self._entries)


class WinRateTracker:
    """Per-opponent ring buffers over the last `window` game outcomes.

    An opponent with no recorded games reports the 0.5 prior.
    """

    def __init__(self, window: int = 1000):
        if window < 1:
            raise ValueError("window must be at least 1")
        self.window = window
        self._outcomes: dict[str, deque] = {}

    def register(self, opponent_id: str) -> None:
        if opponent_id not in self._outcomes:
            self._outcomes[opponent_id] = deque(maxlen=self.window)

    def known(self, opponent_id: str) -> bool:
        return opponent_id in self._outcomes

    def record_result(self, opponent_ids, learner_won: bool) -> None:
        """Append one game outcome against each participating opponent."""
        for opponent_id in opponent_ids:
            if opponent_id is None:
                continue
            if opponent_id not in self._outcomes:
                raise KeyError(f"unknown opponent id {opponent_id!r}")
            self._outcomes[opponent_id].append(1 if learner_won else 0)

    def win_rate(self, opponent_id: str) -> float:
        outcomes = self._outcomes.get(opponent_id)
        if not outcomes:
            return 0.5
        return sum(outcomes) / len(outcomes)

    def games(self, opponent_id: str) -> int:
        return len(self._outcomes.get(opponent_id, ()))

    def snapshot(self) -> dict[str, list[int]]:
        return {k: list(v) for k, v in self._outcomes.items()}

    @classmethod
    def from_snapshot(cls, snapshot: dict, window: int) -> "WinRateTracker":
        tracker = cls(window)
        for opponent_id, outcomes in snapshot.items():
            tracker.register(opponent_id)
            for o in outcomes:
                tracker._outcomes[opponent_id].append(int(o))
        return tracker


@dataclass(frozen=True)
class PfspConfig:
    """Sampling and cadence knobs for league play."""

    p_self: float = 0.3
    z: float = 6.0
    window: int = 1000
    checkpoint_period: int = 5000
    exploiter_episodes: int | None = None  # None: mirror checkpoint_period
    exploiter_p_self: float = 0.0
    opponent_epsilon: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_self <= 1.0:
            raise ValueError("p_self must be in [0, 1]")
        if self.z < 0.0:
            raise ValueError("z must be non-negative")
        if self.window < 1 or self.checkpoint_period < 1:
            raise ValueError("window and checkpoint_period must be positive")


def pfsp_weight(win_rate: float, z: float) -> float:
    """Hard-opponent prioritization f(x) = (1 - x)^z."""
    return (1.0 - win_rate) ** z


def pfsp_sample_opponents(
    roster: LeagueRoster,
    tracker: WinRateTracker,
    cfg: PfspConfig,
    n_opponents: int,
    rng: np.random.Generator,
    p_self: float | None = None,
) -> list[LeagueEntry | None]:
    """Draw opponents slot by slot; None denotes a copy of the current learner.

    Each slot independently: with probability p_self a learner copy, otherwise
    a league entry with probability proportional to (1 - win_rate)^z. All-zero
    weights (every win rate 1) fall back to uniform; an empty league always
    yields learner copies.
    """
    if n_opponents < 1:
        raise ValueError("n_opponents must be at least 1")
    p = cfg.p_self if p_self is None else p_self
    entries = roster.entries()
    picks: list[LeagueEntry | None] = []
    for _ in range(n_opponents):
        if not entries or rng.random() < p:
            picks.append(None)
            continue
        weights = np.array(
            [pfsp_weight(tracker.win_rate(e.entry_id), cfg.z) for e in entries]
        )
        total = weights.sum()
        if total <= 0.0:
            probs = np.full(len(entries), 1.0 / len(entries))
        else:
            probs = weights / total
        idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        picks.append(entries[min(idx, len(entries) - 1)])
    return picks


def priority_refresh_games(window: int, league_size: int, players_per_game: int) -> int:
    """Uniform-opponent games needed to refill every tracker window:
    window * league_size / (players_per_game - 1), rounded up."""
    if players_per_game < 2:
        raise ValueError("players_per_game must be at least 2")
    if window < 0 or league_size < 0:
        raise ValueError("window and league_size must be non-negative")
    return math.ceil(window * league_size / (players_per_game - 1))


class PfspHook:
    """Adapter feeding pfsp_sample_opponents into the maskdqn training loop."""

    def __init__(
        self,
        roster: LeagueRoster,
        tracker: WinRateTracker,
        cfg: PfspConfig,
        n_opponents: int,
        p_self: float | None = None,
    ):
        self.roster = roster
        self.tracker = tracker
        self.cfg = cfg
        self.n_opponents = n_opponents
        self.p_self = p_self

    def select_opponents(self, episode: int, learner_params, rng):
        picks = pfsp_sample_opponents(
            self.roster, self.tracker, self.cfg, self.n_opponents, rng, self.p_self
        )
        return [
            (None, None) if e is None else (e.entry_id, e.params) for e in picks
        ]

    def record_outcome(self, opponent_ids, learner_won: bool) -> None:
        self.tracker.record_result(
            [i for i in opponent_ids if i is not None], learner_won
        )


@dataclass(frozen=True)
class LeagueTrainResult:
    champion: NetworkParams
    roster: LeagueRoster
    tracker: WinRateTracker
    metrics: tuple[tuple[str, EpisodeMetrics], ...]  # (role tag, per-episode metrics)


def run_league_training(
    cfg: PfspConfig,
    dqn_cfg: DqnConfig,
    env,
    mask_train: StrategyMask,
    net_config: ApproximatorConfig | None = None,
    metrics_cb: Callable[[str, EpisodeMetrics], None] | None = None,
) -> LeagueTrainResult:
    """Champion training with periodic checkpoints and per-checkpoint exploiters.

    The champion trains in segments of checkpoint_period episodes (its epsilon
    schedule spans the whole run). After each segment the champion snapshot
    joins the league, then a freshly initialized exploiter trains against the
    current league snapshot and joins too. Fixed seeds give identical rosters.
    """
    if net_config is None:
        net_config = ApproximatorConfig(
            static_dim=env.static_dim,
            event_dim=env.event_dim,
            n_actions=env.n_actions,
            n_dims=env.n_reward_dims,
            seed=dqn_cfg.seed,
        )
    roster = LeagueRoster()
    tracker = WinRateTracker(cfg.window)
    n_opponents = env.n_seats - 1
    if n_opponents < 1:
        raise ValueError("league play needs a multi-seat environment")

    all_metrics: list[tuple[str, EpisodeMetrics]] = []

    def forward_metrics(tag: str):
        def cb(entry: EpisodeMetrics) -> None:
            all_metrics.append((tag, entry))
            if metrics_cb is not None:
                metrics_cb(tag, entry)

        return cb

    champion = init_params(net_config)
    total = dqn_cfg.episodes
    n_periods = max(1, total // cfg.checkpoint_period)
    exploiter_episodes = (
        cfg.exploiter_episodes if cfg.exploiter_episodes is not None else cfg.checkpoint_period
    )

    episode_base = 0
    for period in range(n_periods):
        segment = min(cfg.checkpoint_period, total - episode_base)
        if segment <= 0:
            break
        seg_cfg = _with(dqn_cfg, episodes=segment, seed=dqn_cfg.seed + period)
        base = episode_base

        hook = PfspHook(roster, tracker, cfg, n_opponents)
        result = train(
            env,
            hook,
            seg_cfg,
            mask_train,
            net_config=net_config,
            initial_params=champion,
            epsilon_fn=lambda ep, _b=base: dqn_cfg.epsilon_for(_b + ep),
            opponent_epsilon=cfg.opponent_epsilon,
            metrics_cb=forward_metrics("champion"),
        )
        champion = result.params
        episode_base += segment

        ckpt_id = f"champion_{period + 1:04d}"
        roster.add(LeagueEntry(ckpt_id, "champion_checkpoint", champion, episode_base))
        tracker.register(ckpt_id)

        if exploiter_episodes > 0:
            exp_net = _with_net_seed(net_config, dqn_cfg.seed + 1000 + period)
            exp_tracker = WinRateTracker(cfg.window)
            for entry_id in roster.ids():
                exp_tracker.register(entry_id)
            exp_hook = PfspHook(
                roster, exp_tracker, cfg, n_opponents, p_self=cfg.exploiter_p_self
            )
            exp_cfg = _with(
                dqn_cfg, episodes=exploiter_episodes, seed=dqn_cfg.seed + 5000 + period
            )
            exp_result = train(
                env,
                exp_hook,
                exp_cfg,
                mask_train,
                net_config=exp_net,
                opponent_epsilon=cfg.opponent_epsilon,
                metrics_cb=forward_metrics(f"exploiter_{period + 1:04d}"),
            )
            exp_id = f"exploiter_{period + 1:04d}"
            roster.add(
                LeagueEntry(exp_id, "main_exploiter", exp_result.params, episode_base)
            )
            tracker.register(exp_id)

    return LeagueTrainResult(champion, roster, tracker, tuple(all_metrics))


def _with(cfg: DqnConfig, **kw) -> DqnConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def _with_net_seed(net: ApproximatorConfig, seed: int) -> ApproximatorConfig:
    from dataclasses import replace

    return replace(net, seed=seed)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

MANIFEST_FORMAT = "league-manifest"
MANIFEST_VERSION = 1


def save_manifest(
    path,
    roster: LeagueRoster,
    tracker: WinRateTracker,
    checkpoint_paths: dict[str, str],
    players: int,
    extras: dict | None = None,
) -> None:
    """Persist roster ids/kinds, checkpoint paths, and tracker windows, so an
    evaluation can resume with model weights and priorities held constant."""
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "players": players,
        "window": tracker.window,
        "entries": [
            {
                "id": e.entry_id,
                "kind": e.kind,
                "creation_episode": e.creation_episode,
                "path": checkpoint_paths[e.entry_id],
                "fingerprint": params_fingerprint(e.params),
            }
            for e in roster
        ],
        "tracker": tracker.snapshot(),
    }
    if extras:
        doc["extras"] = extras
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path):
    """Return (roster, tracker, manifest dict); loads entry checkpoints."""
    from .nnapprox import load_params

    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: not a {MANIFEST_FORMAT} v{MANIFEST_VERSION} file")
    roster = LeagueRoster()
    base = Path(path).parent
    for rec in doc["entries"]:
        ckpt = Path(rec["path"])
        if not ckpt.is_absolute():
            ckpt = base / ckpt
        params = load_params(ckpt)
        if params_fingerprint(params) != rec["fingerprint"]:
            raise ValueError(f"league entry {rec['id']} does not match its fingerprint")
        roster.add(LeagueEntry(rec["id"], rec["kind"], params, rec["creation_episode"]))
    tracker = WinRateTracker.from_snapshot(doc["tracker"], doc["window"])
    for entry_id in roster.ids():
        tracker.register(entry_id)
    return roster, tracker, doc
