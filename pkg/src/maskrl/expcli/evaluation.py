"""Evaluation machinery behind the CLI: frozen-weight league evaluation,
counterfactual action distributions, and the lie-weight sweep.

Evaluation games draw their randomness from per-game streams derived from
(seed, game index), so results are independent of execution order and
byte-stable across runs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..coupenv import CoupEnv, GameLogWriter, encode_event, event_dim
from ..coupenv.gamelog import read_game_log
from ..league import (
    LeagueRoster,
    PfspConfig,
    WinRateTracker,
    pfsp_sample_opponents,
    priority_refresh_games,
)
from ..maskdqn import QNetPolicy
from ..nnapprox import IncrementalEncoder, NetworkParams, Observation
from ..rlcore import StrategyMask, masked_argmax

__all__ = [
    "EvalReport",
    "SweepPoint",
    "eval_against_league",
    "counterfactual_action_distribution",
    "lie_weight_sweep",
    "refresh_priorities_then_sweep",
]


@dataclass(frozen=True)
class EvalReport:
    """Aggregates from greedy-policy games against a frozen league."""

    games: int
    wins: int
    reward_totals: np.ndarray  # per dimension
    dimension_labels: tuple[str, ...]
    actions_total: int
    lie_actions: int
    action_type_counts: dict  # (action type, is_lie) -> count
    truncated_games: int

    @property
    def win_rate(self) -> float:
        return self.wins / self.games if self.games else 0.0

    @property
    def reward_share_pct(self) -> np.ndarray:
        total = float(self.reward_totals.sum())
        if total == 0.0:
            return np.zeros_like(self.reward_totals)
        return 100.0 * self.reward_totals / total

    @property
    def lie_action_fraction(self) -> float:
        return self.lie_actions / self.actions_total if self.actions_total else 0.0


@dataclass(frozen=True)
class SweepPoint:
    weight: float
    win_pct: float
    lie_pct: float
    games: int


def _game_rng(seed: int, game_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, game_index]))


def eval_against_league(
    params: NetworkParams,
    roster: LeagueRoster,
    tracker: WinRateTracker,
    mask_inference: StrategyMask,
    n_games: int,
    seed: int,
    pfsp_cfg: PfspConfig | None = None,
    players: int = 3,
    opponent_epsilon: float = 0.05,
    max_moves: int = 10_000,
    log_writer: GameLogWriter | None = None,
    opponent_sampling: str = "pfsp",
    result_tracker: WinRateTracker | None = None,
) -> EvalReport:
    """Play n_games with frozen weights and greedy masked play for the learner.

    Opponent slots are drawn from the league (PFSP weights by default, or
    uniform for priority refreshing); weights and priorities never change
    during evaluation. With a log_writer, every public event and every
    learner decision (with its observation) is recorded for counterfactual
    replay. `result_tracker`, when given, receives per-game outcomes (used to
    REBUILD priorities; the sampling tracker itself stays frozen).
    """
    if len(roster) == 0:
        raise ValueError("cannot evaluate against an empty league")
    if pfsp_cfg is None:
        pfsp_cfg = PfspConfig()
    env = CoupEnv(players, max_moves=max_moves)
    reward_totals = np.zeros(env.n_reward_dims)
    wins = 0
    actions_total = 0
    lie_actions = 0
    truncated = 0
    type_counts: Counter = Counter()

    for game_index in range(n_games):
        rng = _game_rng(seed, game_index)
        if opponent_sampling == "uniform":
            # Balanced cyclic assignment: each entry appears in the same
            # number of slots, so window * |roster| / (players - 1) games
            # refill every opponent window exactly.
            entries = roster.entries()
            base = game_index * (players - 1)
            picks = [entries[(base + j) % len(entries)] for j in range(players - 1)]
        else:
            picks = pfsp_sample_opponents(
                roster, tracker, pfsp_cfg, players - 1, rng, p_self=0.0
            )
        learner_seat = int(rng.integers(players))
        learner_policy = QNetPolicy(params, mask_inference, epsilon=0.0)
        learner_policy.begin_episode()
        seat_policies: dict[int, QNetPolicy] = {learner_seat: learner_policy}
        pick_iter = iter(picks)
        opponent_ids = []
        for seat in range(players):
            if seat == learner_seat:
                continue
            entry = next(pick_iter)
            opp_params = params if entry is None else entry.params
            opponent_ids.append(None if entry is None else entry.entry_id)
            policy = QNetPolicy(opp_params, mask_inference, epsilon=opponent_epsilon)
            policy.begin_episode()
            seat_policies[seat] = policy

        env.reset(rng)
        if log_writer is not None:
            log_writer.game(game_index, players, learner_seat)
            logged_events = 0

        while not env.terminal():
            seat = env.current_seat()
            obs = env.observe(seat)
            legal = env.legal_actions()
            policy = seat_policies[seat]
            action = policy.act(obs, legal, rng)
            if seat == learner_seat:
                actions_total += 1
                action_is_lie = env.is_lie_action(action, seat)
                if action_is_lie:
                    lie_actions += 1
                type_counts[(env.action_type(action), action_is_lie)] += 1
                if log_writer is not None:
                    log_writer.decision(
                        game_index,
                        seat,
                        n_events=len(env.state.history),
                        static=obs.static,
                        legal=legal,
                        action_types=[env.action_type(a) for a in legal],
                        lie_flags=[env.is_lie_action(a, seat) for a in legal],
                        action=action,
                    )
            rewards_by_seat, _ = env.step(action)
            if log_writer is not None:
                history = env.state.history
                for ev in history[logged_events:]:
                    log_writer.event(game_index, ev)
                logged_events = len(history)
            learner_rewards = rewards_by_seat.get(learner_seat)
            if learner_rewards is not None:
                reward_totals += learner_rewards

        won = env.winner() == learner_seat
        if won:
            wins += 1
        if env.truncated:
            truncated += 1
        if log_writer is not None:
            log_writer.result(game_index, env.winner(), env.state.move_count)
        if result_tracker is not None:
            result_tracker.record_result(
                [i for i in opponent_ids if i is not None], won
            )

    return EvalReport(
        games=n_games,
        wins=wins,
        reward_totals=reward_totals,
        dimension_labels=env.dimension_labels,
        actions_total=actions_total,
        lie_actions=lie_actions,
        action_type_counts=dict(type_counts),
        truncated_games=truncated,
    )


def counterfactual_action_distribution(
    log_path,
    params: NetworkParams,
    masks: dict[str, StrategyMask],
):
    """Greedy masked re-decisions over recorded decision points.

    For every recorded decision, re-encodes the observation from the logged
    events, recomputes the network outputs once, and takes the greedy action
    under each alternative mask over the same legal subset. Returns
    {"realized": counter, **{mask_id: counter}} with (action type, is_lie)
    keys. With the recorded mask among the alternatives, its histogram equals
    the realized one exactly.
    """
    header, records = read_game_log(log_path)
    players = None
    events_by_game: dict[int, list] = {}
    decisions_by_game: dict[int, list] = {}
    for rec in records:
        if rec["kind"] == "game":
            players = rec["players"]
            events_by_game[rec["game"]] = []
            decisions_by_game[rec["game"]] = []
        elif rec["kind"] == "event":
            events_by_game[rec["game"]].append(rec["event_obj"])
        elif rec["kind"] == "decision":
            decisions_by_game[rec["game"]].append(rec)
    if players is None:
        raise ValueError(f"{log_path}: no game records")

    histograms: dict[str, Counter] = {"realized": Counter()}
    for mask_id in masks:
        histograms[mask_id] = Counter()

    d_event = event_dim(players)
    for game_index, decisions in decisions_by_game.items():
        if not decisions:
            continue
        events = events_by_game[game_index]
        # One incremental encoder per observing seat, fed in decision order.
        encoders: dict[int, IncrementalEncoder] = {}
        encoded: dict[int, list[np.ndarray]] = {}
        for rec in sorted(decisions, key=lambda r: r["n_events"]):
            seat = rec["seat"]
            if seat not in encoders:
                encoders[seat] = IncrementalEncoder(params)
                encoded[seat] = []
            rows = encoded[seat]
            while len(rows) < rec["n_events"]:
                rows.append(encode_event(events[len(rows)], seat, players))
            history = np.stack(rows) if rows else np.zeros((0, d_event))
            obs = Observation(np.asarray(rec["static"], dtype=np.float64), history)
            q_row = encoders[seat].q_values(obs)
            legal = rec["legal"]
            types = rec["types"]
            lies = rec["lies"]
            by_action = {a: (types[i], bool(lies[i])) for i, a in enumerate(legal)}
            histograms["realized"][by_action[rec["action"]]] += 1
            for mask_id, mask in masks.items():
                choice = masked_argmax(q_row, mask, legal)
                histograms[mask_id][by_action[choice]] += 1
    return histograms


def lie_weight_sweep(
    params: NetworkParams,
    roster: LeagueRoster,
    tracker: WinRateTracker,
    weights,
    n_games: int,
    seed: int,
    base_mask: StrategyMask,
    lie_label: str = "lie",
    **eval_kwargs,
) -> list[SweepPoint]:
    """Evaluate with the lie dimension reweighted across `weights`."""
    weights = list(weights)
    if not weights:
        raise ValueError("weights must be nonempty")
    points = []
    for idx, w in enumerate(weights):
        mask = base_mask.with_weight(lie_label, float(w))
        report = eval_against_league(
            params, roster, tracker, mask, n_games, seed + idx, **eval_kwargs
        )
        points.append(
            SweepPoint(
                weight=float(w),
                win_pct=100.0 * report.win_rate,
                lie_pct=100.0 * report.lie_action_fraction,
                games=n_games,
            )
        )
    return points


def refresh_priorities_then_sweep(
    params: NetworkParams,
    roster: LeagueRoster,
    pfsp_cfg: PfspConfig,
    weights,
    n_games: int,
    seed: int,
    base_mask: StrategyMask,
    players: int = 3,
    **eval_kwargs,
):
    """Rebuild PFSP priorities with uniform-opponent games, then sweep again.

    Plays window * |roster| / (players - 1) uniformly sampled games (enough to
    refill every opponent's outcome window) under the base mask, records
    outcomes into a fresh tracker, and repeats the lie-weight sweep against
    the rebuilt ("harder") priorities.
    """
    refreshed = WinRateTracker(pfsp_cfg.window)
    for entry_id in roster.ids():
        refreshed.register(entry_id)
    n_refresh = priority_refresh_games(pfsp_cfg.window, len(roster), players)
    eval_against_league(
        params,
        roster,
        refreshed,  # sampling tracker is ignored under uniform sampling
        base_mask,
        n_refresh,
        seed,
        pfsp_cfg=pfsp_cfg,
        players=players,
        opponent_sampling="uniform",
        result_tracker=refreshed,
        **eval_kwargs,
    )
    points = lie_weight_sweep(
        params,
        roster,
        refreshed,
        weights,
        n_games,
        seed + 10_000,
        base_mask,
        pfsp_cfg=pfsp_cfg,
        players=players,
        **eval_kwargs,
    )
    return refreshed, points
