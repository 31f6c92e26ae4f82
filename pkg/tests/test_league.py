import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskrl.coupenv import CoupEnv
from maskrl.league import (
    LeagueEntry,
    LeagueRoster,
    PfspConfig,
    WinRateTracker,
    load_manifest,
    pfsp_sample_opponents,
    pfsp_weight,
    priority_refresh_games,
    run_league_training,
    save_manifest,
)
from maskrl.maskdqn import DqnConfig
from maskrl.nnapprox import ApproximatorConfig, init_params, params_fingerprint, save_params
from maskrl.rlcore import StrategyMask

NET = ApproximatorConfig(static_dim=3, event_dim=2, n_actions=2, n_dims=2,
                         static_hidden=(4,), recurrent_width=2, head_hidden=(4,), seed=0)


def entry(i, kind="champion_checkpoint", seed=None):
    cfg = ApproximatorConfig(static_dim=3, event_dim=2, n_actions=2, n_dims=2,
                             static_hidden=(4,), recurrent_width=2, head_hidden=(4,),
                             seed=seed if seed is not None else i)
    return LeagueEntry(f"entry_{i}", kind, init_params(cfg), creation_episode=i * 100)


def roster_with(n):
    roster = LeagueRoster()
    for i in range(n):
        roster.add(entry(i))
    return roster


def tracker_with(roster, rates, window=1000):
    tracker = WinRateTracker(window)
    for e, rate in zip(roster, rates):
        tracker.register(e.entry_id)
        wins = int(round(rate * 100))
        for i in range(100):
            tracker.record_result([e.entry_id], i < wins)
    return tracker


class TestWinRateTracker:
    def test_unseen_opponent_prior(self):
        tracker = WinRateTracker(10)
        tracker.register("a")
        assert tracker.win_rate("a") == 0.5
        assert tracker.win_rate("never-registered") == 0.5

    def test_window_eviction(self):
        tracker = WinRateTracker(1000)
        tracker.register("a")
        for _ in range(1000):
            tracker.record_result(["a"], True)
        for _ in range(1000):
            tracker.record_result(["a"], False)
        assert tracker.win_rate("a") == 0.0

    def test_small_sample(self):
        tracker = WinRateTracker(10)
        tracker.register("a")
        for won in (True, True, True, False):
            tracker.record_result(["a"], won)
        assert tracker.win_rate("a") == 0.75

    def test_unknown_opponent_rejected(self):
        tracker = WinRateTracker(10)
        with pytest.raises(KeyError):
            tracker.record_result(["ghost"], True)

    def test_snapshot_round_trip(self):
        tracker = WinRateTracker(5)
        tracker.register("a")
        for won in (True, False, True):
            tracker.record_result(["a"], won)
        clone = WinRateTracker.from_snapshot(tracker.snapshot(), 5)
        assert clone.win_rate("a") == tracker.win_rate("a")


class TestPfspSampling:
    def test_weight_function(self):
        assert pfsp_weight(0.0, 6) == 1.0
        assert pfsp_weight(0.5, 6) == pytest.approx(0.015625)
        assert pfsp_weight(1.0, 6) == 0.0

    def test_probabilities_forced_by_weights(self):
        roster = roster_with(3)
        tracker = tracker_with(roster, [0.0, 0.5, 1.0])
        cfg = PfspConfig(p_self=0.0, z=6.0)
        rng = np.random.default_rng(0)
        counts = {e.entry_id: 0 for e in roster}
        n = 40_000
        for pick in pfsp_sample_opponents(roster, tracker, cfg, n, rng):
            counts[pick.entry_id] += 1
        assert counts["entry_0"] / n == pytest.approx(0.98462, abs=0.005)
        assert counts["entry_1"] / n == pytest.approx(0.01538, abs=0.005)
        assert counts["entry_2"] == 0

    def test_p_one_always_self(self):
        roster = roster_with(2)
        tracker = tracker_with(roster, [0.2, 0.4])
        picks = pfsp_sample_opponents(roster, tracker, PfspConfig(p_self=1.0), 50,
                                      np.random.default_rng(1))
        assert all(p is None for p in picks)

    def test_empty_league_falls_back_to_self(self):
        picks = pfsp_sample_opponents(LeagueRoster(), WinRateTracker(10),
                                      PfspConfig(p_self=0.0), 2, np.random.default_rng(2))
        assert picks == [None, None]

    def test_all_win_rates_one_uniform_fallback(self):
        roster = roster_with(2)
        tracker = tracker_with(roster, [1.0, 1.0])
        rng = np.random.default_rng(3)
        picks = pfsp_sample_opponents(roster, tracker, PfspConfig(p_self=0.0, z=6.0),
                                      2000, rng)
        ids = [p.entry_id for p in picks]
        assert abs(ids.count("entry_0") / 2000 - 0.5) < 0.05

    def test_z_zero_is_uniform(self):
        roster = roster_with(3)
        tracker = tracker_with(roster, [0.1, 0.5, 0.9])
        rng = np.random.default_rng(4)
        picks = pfsp_sample_opponents(roster, tracker, PfspConfig(p_self=0.0, z=0.0),
                                      9000, rng)
        ids = [p.entry_id for p in picks]
        for e in roster:
            assert abs(ids.count(e.entry_id) / 9000 - 1 / 3) < 0.05

    @given(rates=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5),
           z=st.floats(0.0, 8.0))
    @settings(max_examples=50, deadline=None)
    def test_league_draw_probabilities_sum_to_one(self, rates, z):
        weights = np.array([pfsp_weight(x, z) for x in rates])
        total = weights.sum()
        probs = weights / total if total > 0 else np.full(len(rates), 1 / len(rates))
        assert abs(probs.sum() - 1.0) <= 1e-12

    @given(seed=st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_increasing_z_weakly_favors_hardest(self, seed):
        rng = np.random.default_rng(seed)
        rates = rng.uniform(0.0, 0.999, size=4)
        hardest = int(np.argmin(rates))
        for z_lo, z_hi in ((0.0, 2.0), (2.0, 6.0)):
            w_lo = np.array([pfsp_weight(x, z_lo) for x in rates])
            w_hi = np.array([pfsp_weight(x, z_hi) for x in rates])
            p_lo = w_lo[hardest] / w_lo.sum()
            p_hi = w_hi[hardest] / w_hi.sum()
            assert p_hi >= p_lo - 1e-12


class TestPriorityRefreshCount:
    def test_3_player_count(self):
        assert priority_refresh_games(1000, 39, 3) == 19500

    def test_2_player_count(self):
        assert priority_refresh_games(1000, 39, 2) == 39000

    def test_zero_window(self):
        assert priority_refresh_games(0, 12, 3) == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            priority_refresh_games(1000, 5, 1)


class TestLeagueEntryAndRoster:
    def test_duplicate_id_rejected(self):
        roster = LeagueRoster()
        roster.add(entry(0))
        with pytest.raises(ValueError):
            roster.add(entry(0))

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            entry(0, kind="sidekick")


def desk_league_config(periods=2, period=12, exploiter=6):
    pfsp = PfspConfig(p_self=0.3, z=6.0, window=50, checkpoint_period=period,
                      exploiter_episodes=exploiter)
    dqn = DqnConfig(episodes=period * periods, batch_size=4, capacity=500,
                    target_period=50, gamma=0.9, alpha=1e-3, seed=5,
                    update_every=4)
    return pfsp, dqn


def small_net(env, seed=0):
    return ApproximatorConfig(
        static_dim=env.static_dim, event_dim=env.event_dim,
        n_actions=env.n_actions, n_dims=env.n_reward_dims,
        static_hidden=(12,), recurrent_width=8, head_hidden=(16,), seed=seed)


class TestRunLeagueTraining:
    def test_roster_counting_contract(self):
        pfsp, dqn = desk_league_config(periods=3)
        env = CoupEnv(2, max_moves=400)
        mask = StrategyMask(np.ones(4), ("win", "challenge", "lie", "bait"))
        result = run_league_training(pfsp, dqn, env, mask, net_config=small_net(env))
        kinds = [e.kind for e in result.roster]
        assert kinds.count("champion_checkpoint") == 3
        assert kinds.count("main_exploiter") == 3
        assert len(result.metrics) == 3 * 12 + 3 * 6

    def test_deterministic_roster(self):
        pfsp, dqn = desk_league_config(periods=2)
        mask = StrategyMask(np.ones(4), ("win", "challenge", "lie", "bait"))
        env_a, env_b = CoupEnv(2, max_moves=400), CoupEnv(2, max_moves=400)
        a = run_league_training(pfsp, dqn, env_a, mask, net_config=small_net(env_a))
        b = run_league_training(pfsp, dqn, env_b, mask, net_config=small_net(env_b))
        assert a.roster.ids() == b.roster.ids()
        for ea, eb in zip(a.roster, b.roster):
            assert params_fingerprint(ea.params) == params_fingerprint(eb.params)

    def test_entries_never_mutated(self):
        pfsp, dqn = desk_league_config(periods=2)
        env = CoupEnv(2, max_moves=400)
        mask = StrategyMask(np.ones(4), ("win", "challenge", "lie", "bait"))
        result = run_league_training(pfsp, dqn, env, mask, net_config=small_net(env))
        fingerprints = {e.entry_id: params_fingerprint(e.params) for e in result.roster}
        # keep training-ish activity going, then re-check
        _ = run_league_training(pfsp, dqn, env, mask, net_config=small_net(env))
        for e in result.roster:
            assert params_fingerprint(e.params) == fingerprints[e.entry_id]

    def test_manifest_round_trip(self, tmp_path):
        pfsp, dqn = desk_league_config(periods=1)
        env = CoupEnv(2, max_moves=400)
        mask = StrategyMask(np.ones(4), ("win", "challenge", "lie", "bait"))
        result = run_league_training(pfsp, dqn, env, mask, net_config=small_net(env))
        paths = {}
        for e in result.roster:
            p = tmp_path / f"{e.entry_id}.ckpt"
            save_params(e.params, p)
            paths[e.entry_id] = f"{e.entry_id}.ckpt"
        save_manifest(tmp_path / "manifest.json", result.roster, result.tracker,
                      paths, players=2)
        roster, tracker, doc = load_manifest(tmp_path / "manifest.json")
        assert roster.ids() == result.roster.ids()
        for e in roster:
            assert params_fingerprint(e.params) == params_fingerprint(
                result.roster.get(e.entry_id).params
            )
        for entry_id in roster.ids():
            assert tracker.win_rate(entry_id) == result.tracker.win_rate(entry_id)
