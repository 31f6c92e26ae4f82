"""Nightly desk-scale run: train a win-only champion with a small league,
then sweep the post-training lie weight and write the full report bundle.

This is the hours-scale pipeline behind the directional behavioral check
(lie fraction monotone in the lie weight, near-zero at -1, win rate barely
moved); it is not part of the per-commit test run.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..coupenv import CoupEnv
from ..league import run_league_training, save_manifest
from ..nnapprox import save_params
from ..rlcore import StrategyMask
from .config import ExperimentConfig, load_config
from .evaluation import SweepPoint, lie_weight_sweep

__all__ = ["NightlyOutcome", "run_nightly"]

DEFAULT_WEIGHTS = tuple(float(w) for w in range(-5, 6))


@dataclass(frozen=True)
class NightlyOutcome:
    points: tuple[SweepPoint, ...]
    out_dir: Path
    champion_path: Path
    train_seconds: float
    sweep_seconds: float


def run_nightly(
    out_dir,
    config_path=None,
    seed: int = 0,
    weights=DEFAULT_WEIGHTS,
    progress=print,
) -> NightlyOutcome:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config_path is None:
        candidate = Path(__file__).resolve().parents[3] / "configs" / "nightly.yaml"
        config_path = candidate if candidate.exists() else None
    cfg = load_config(config_path) if config_path else ExperimentConfig()

    players = cfg.environment.players
    env = CoupEnv(players, max_moves=cfg.environment.max_moves)
    labels = cfg.masks.labels
    mask_train = StrategyMask(np.array(cfg.masks.train), labels)
    net_cfg = cfg.net_config(
        env.static_dim, env.event_dim, env.n_actions, env.n_reward_dims, seed
    )

    progress(f"nightly: training champion for {cfg.dqn.episodes} episodes "
             f"({players} players, checkpoint every {cfg.league.checkpoint_period})")
    t0 = time.time()
    last = {"t": t0}

    def on_metrics(tag, entry):
        if entry.episode % 1000 == 0 and time.time() - last["t"] > 5:
            last["t"] = time.time()
            progress(f"  [{tag}] episode {entry.episode} "
                     f"eps={entry.epsilon:.3f} loss={entry.loss:.4f}")

    result = run_league_training(
        cfg.pfsp_config(), cfg.dqn_config(seed), env, mask_train, net_cfg,
        metrics_cb=on_metrics,
    )
    train_seconds = time.time() - t0
    progress(f"nightly: training done in {train_seconds / 3600:.2f} h; "
             f"league has {len(result.roster)} entries")

    league_dir = out / "league"
    league_dir.mkdir(exist_ok=True)
    ckpt_paths = {}
    for entry in result.roster:
        path = league_dir / f"{entry.entry_id}.ckpt"
        save_params(entry.params, path)
        ckpt_paths[entry.entry_id] = f"league/{entry.entry_id}.ckpt"
    champion_path = out / "champion_final.ckpt"
    save_params(result.champion, champion_path)
    save_manifest(out / "manifest.json", result.roster, result.tracker,
                  ckpt_paths, players,
                  extras={"mask_train": list(cfg.masks.train)})

    with open(out / "train_metrics.csv", "w") as fh:
        fh.write("role,episode," + ",".join(labels) + ",win,loss,epsilon,steps\n")
        for role, m in result.metrics:
            rewards = ",".join(repr(float(x)) for x in m.rewards)
            fh.write(f"{role},{m.episode},{rewards},{int(m.win)},{m.loss!r},"
                     f"{m.epsilon!r},{m.steps}\n")

    base_mask = StrategyMask(np.array(cfg.masks.inference), labels)
    progress(f"nightly: sweeping lie weights {list(weights)} "
             f"with {cfg.eval.games} games each")
    t1 = time.time()
    points = lie_weight_sweep(
        result.champion, result.roster, result.tracker, weights,
        cfg.eval.games, seed + 1, base_mask,
        pfsp_cfg=cfg.pfsp_config(), players=players,
        opponent_epsilon=cfg.environment.opponent_epsilon,
        max_moves=cfg.environment.max_moves,
    )
    sweep_seconds = time.time() - t1

    with open(out / "sweep.csv", "w") as fh:
        fh.write("weight,win_pct,lie_pct,games\n")
        for p in points:
            fh.write(f"{p.weight!r},{p.win_pct!r},{p.lie_pct!r},{p.games}\n")
    from .plots import sweep_figure

    sweep_figure(points, out / "sweep.svg")

    lf = {p.weight: p.lie_pct for p in points}
    wf = {p.weight: p.win_pct for p in points}
    summary = {
        "train_seconds": train_seconds,
        "sweep_seconds": sweep_seconds,
        "lie_pct": {str(w): lf[w] for w in lf},
        "win_pct": {str(w): wf[w] for w in wf},
        "criteria": {
            "monotone_at_-1_0_1": bool(lf.get(-1.0, 0) < lf.get(0.0, 0) < lf.get(1.0, 0)),
            "lie_below_5pct_at_-1": bool(lf.get(-1.0, 100.0) < 5.0),
            "win_within_10pts": bool(abs(wf.get(-1.0, 0) - wf.get(0.0, 0)) <= 10.0),
        },
    }
    (out / "nightly_report.json").write_text(json.dumps(summary, indent=2) + "\n")
    for w in sorted(lf):
        progress(f"  w={w:+.1f}: win {wf[w]:.2f}%  lie {lf[w]:.2f}%")
    return NightlyOutcome(tuple(points), out, champion_path, train_seconds, sweep_seconds)
