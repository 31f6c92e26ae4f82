"""Experiment command line.

Subcommands: train-tabular, train-league, eval, counterfactual, sweep,
verify-theory. Every figure-producing command also writes the underlying CSV;
`--format json` adds JSON mirrors. All outputs are deterministic under a
fixed --seed.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .. import league as league_mod
from .. import tabular
from ..coupenv import CoupEnv, GameLogWriter, event_dim, static_dim, n_actions
from ..maskdqn import DqnConfig
from ..nnapprox import load_params, save_params
from ..rlcore import StrategyMask
from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import (
    counterfactual_action_distribution,
    eval_against_league,
    lie_weight_sweep,
    refresh_priorities_then_sweep,
)

__all__ = ["cli", "cli_main"]


def common_options(f):
    @click.option("--config", "config_path", default=None,
                  help="YAML experiment configuration (strict keys).")
    @click.option("--seed", type=int, default=0, show_default=True,
                  help="Master seed; all randomness derives from it.")
    @click.option("--out-dir", type=click.Path(file_okay=False), default="out",
                  show_default=True, help="Directory for CSVs, figures, checkpoints.")
    @click.option("--format", "out_format", type=click.Choice(["csv", "json"]),
                  default="csv", show_default=True,
                  help="csv writes CSVs only; json adds JSON mirrors.")
    @click.option("--plot", is_flag=True, help="Also render SVG figures.")
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        return f(*args, **kwargs)

    return wrapper


def _load_cfg(config_path) -> ExperimentConfig:
    if config_path is None:
        return ExperimentConfig()
    try:
        return load_config(config_path)
    except FileNotFoundError as exc:
        raise click.UsageError(str(exc)) from exc
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _maybe_json(path: Path, doc, out_format: str) -> None:
    if out_format == "json":
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_mask(text: str, labels) -> StrategyMask:
    try:
        weights = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise click.UsageError(f"bad mask {text!r}: {exc}") from exc
    if len(weights) != len(labels):
        raise click.UsageError(
            f"mask {text!r} has {len(weights)} weights, expected {len(labels)}"
        )
    return StrategyMask(np.array(weights), tuple(labels))


def _parse_weights(text: str) -> list[float]:
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise click.UsageError(f"bad weight range {text!r}")
        return [float(w) for w in range(lo, hi + 1)]
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise click.UsageError(f"bad weights {text!r}: {exc}") from exc


@click.group()
def cli():
    """Reward-decomposition / strategy-masking experiment harness."""


# ---------------------------------------------------------------------------
# verify-theory
# ---------------------------------------------------------------------------


@cli.command("verify-theory")
@common_options
@click.option("--mdps", type=int, default=20, show_default=True,
              help="Random MDPs for the contraction suite.")
@click.option("--pairs", type=int, default=1000, show_default=True,
              help="Random (Q1, Q2, mask) triples per MDP.")
@click.option("--conv-mdps", type=int, default=5, show_default=True,
              help="Random MDPs for the convergence suite.")
@click.option("--steps", type=int, default=2_000_000, show_default=True,
              help="Step cap per convergence run.")
def verify_theory(config_path, seed, out_dir, out_format, plot, mdps, pairs, conv_mdps, steps):
    """Run the contraction and convergence verification suites."""
    out = _out_dir(out_dir)
    contraction = tabular.contraction_suite(n_mdps=mdps, n_pairs=pairs, seed=seed)
    rows = [
        {
            "mdp": r.mdp_index, "states": r.n_states, "actions": r.n_actions,
            "dims": r.n_dims, "gamma": r.gamma, "pairs": r.n_pairs,
            "max_violation": repr(r.max_violation), "passed": r.passed,
        }
        for r in contraction
    ]
    _write_csv(out / "contraction_report.csv", list(rows[0].keys()), rows)
    _maybe_json(out / "contraction_report.json", rows, out_format)

    convergence = tabular.convergence_suite(n_mdps=conv_mdps, max_steps=steps, seed=seed)
    conv_rows = [
        {
            "mdp": r.mdp_index, "states": r.n_states, "actions": r.n_actions,
            "dims": r.n_dims, "gamma": r.gamma, "steps": r.steps,
            "final_distance": repr(r.final_distance), "target": repr(r.target),
            "passed": r.passed,
        }
        for r in convergence
    ]
    _write_csv(out / "convergence_report.csv", list(conv_rows[0].keys()), conv_rows)
    _maybe_json(out / "convergence_report.json", conv_rows, out_format)

    ok = all(r.passed for r in contraction) and all(r.passed for r in convergence)
    worst = max(r.max_violation for r in contraction)
    click.echo(f"contraction: {len(contraction)} MDPs, worst violation {worst:.3e}")
    for r in convergence:
        click.echo(
            f"convergence mdp{r.mdp_index}: gamma={r.gamma} distance={r.final_distance:.4f} "
            f"steps={r.steps} {'PASS' if r.passed else 'FAIL'}"
        )
    if not ok:
        raise SystemExit(1)
    click.echo(f"reports written to {out}")


# ---------------------------------------------------------------------------
# train-tabular
# ---------------------------------------------------------------------------


@cli.command("train-tabular")
@common_options
def train_tabular(config_path, seed, out_dir, out_format, plot):
    """Train a masked TD(0) learner on a finite MDP and trace convergence."""
    cfg = _load_cfg(config_path)
    out = _out_dir(out_dir)
    section = cfg.tabular
    if section.mdp_file is not None:
        mdp = tabular.load_mdp(section.mdp_file)
    else:
        mdp = tabular.random_mdp(
            section.states, section.actions, section.dims, section.gamma,
            np.random.default_rng(section.mdp_seed), reward_scale=section.reward_scale,
        )
    if len(section.mask) != mdp.n_dims:
        raise click.UsageError(
            f"tabular.mask has {len(section.mask)} weights, MDP has K={mdp.n_dims}"
        )
    mask = StrategyMask(np.array(section.mask))
    schedule = tabular.robbins_monro_schedule(
        alpha0=section.alpha0, rho=section.rho, epsilon=section.epsilon
    )
    result = tabular.run_tabular_training(
        mdp, section.algo, mask, schedule,
        episodes=section.episodes, seed=seed,
        max_steps_per_episode=section.max_steps_per_episode,
        checkpoint_every=max(1000, section.episodes * section.max_steps_per_episode // 200),
    )
    rows = [{"step": step, "distance": repr(dist)} for step, dist in result.trace]
    _write_csv(out / "tabular_trace.csv", ["step", "distance"], rows)
    _maybe_json(out / "tabular_trace.json", rows, out_format)
    save_path = out / "tabular_mdp.txt"
    tabular.save_mdp(mdp, save_path)
    if plot:
        from .plots import trace_figure

        trace_figure(result.trace, out / "tabular_trace.svg")
    click.echo(
        f"{section.algo} on {mdp.n_states}x{mdp.n_actions} MDP: final distance "
        f"{result.final_distance:.5f} after {result.total_steps} steps"
    )
    click.echo(f"trace written to {out / 'tabular_trace.csv'}")


# ---------------------------------------------------------------------------
# train-league
# ---------------------------------------------------------------------------


@cli.command("train-league")
@common_options
def train_league(config_path, seed, out_dir, out_format, plot):
    """League-play training: champion checkpoints plus per-period exploiters."""
    cfg = _load_cfg(config_path)
    out = _out_dir(out_dir)
    players = cfg.environment.players
    env = CoupEnv(players, max_moves=cfg.environment.max_moves)
    labels = cfg.masks.labels
    mask_train = StrategyMask(np.array(cfg.masks.train), labels)
    net_cfg = cfg.net_config(
        env.static_dim, env.event_dim, env.n_actions, env.n_reward_dims, seed
    )
    result = league_mod.run_league_training(
        cfg.pfsp_config(), cfg.dqn_config(seed), env, mask_train, net_cfg
    )

    league_dir = out / "league"
    league_dir.mkdir(exist_ok=True)
    ckpt_paths = {}
    for entry in result.roster:
        path = league_dir / f"{entry.entry_id}.ckpt"
        save_params(entry.params, path)
        ckpt_paths[entry.entry_id] = f"league/{entry.entry_id}.ckpt"
    save_params(result.champion, out / "champion_final.ckpt")
    league_mod.save_manifest(
        out / "manifest.json", result.roster, result.tracker, ckpt_paths, players,
        extras={"mask_train": list(cfg.masks.train), "mask_labels": list(labels)},
    )

    fieldnames = ["role", "episode", *labels, "win", "loss", "epsilon", "steps"]
    rows = []
    for role, entry in result.metrics:
        row = {"role": role, "episode": entry.episode, "win": int(entry.win),
               "loss": repr(entry.loss), "epsilon": repr(entry.epsilon),
               "steps": entry.steps}
        for k, label in enumerate(labels):
            row[label] = repr(float(entry.rewards[k]))
        rows.append(row)
    _write_csv(out / "train_metrics.csv", fieldnames, rows)
    _maybe_json(
        out / "train_metrics.json",
        [{k: row[k] for k in fieldnames} for row in rows],
        out_format,
    )
    if plot:
        from .plots import training_curves_figure

        curve_rows = [(role, m.rewards, m.win) for role, m in result.metrics]
        training_curves_figure(curve_rows, labels, out / "train_curves.svg")
    click.echo(
        f"league training done: {len(result.roster)} entries, "
        f"metrics for {len(rows)} episodes in {out / 'train_metrics.csv'}"
    )


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _load_league(league_path: str):
    manifest = Path(league_path)
    if manifest.is_dir():
        manifest = manifest / "manifest.json"
    if not manifest.exists():
        raise click.UsageError(f"league manifest not found: {manifest}")
    return league_mod.load_manifest(manifest)


def _params_option(f):
    return click.option(
        "--params", "params_path", required=True,
        help="Checkpoint of the agent under evaluation.",
    )(f)


def _league_option(f):
    return click.option(
        "--league", "league_path", required=True,
        help="League manifest (or its output directory).",
    )(f)


@cli.command("eval")
@common_options
@_params_option
@_league_option
@click.option("--games", type=int, default=None, help="Game count (default from config).")
@click.option("--mask", "mask_text", default=None,
              help="Inference mask weights, comma-separated (default from config).")
@click.option("--record", is_flag=True,
              help="Record observations at every learner decision for counterfactuals.")
def eval_cmd(config_path, seed, out_dir, out_format, plot, params_path, league_path,
             games, mask_text, record):
    """Play frozen-weight games against a league and report reward shares."""
    cfg = _load_cfg(config_path)
    out = _out_dir(out_dir)
    params = load_params(params_path)
    roster, tracker, manifest = _load_league(league_path)
    labels = cfg.masks.labels
    mask = (
        _parse_mask(mask_text, labels)
        if mask_text is not None
        else StrategyMask(np.array(cfg.masks.inference), labels)
    )
    n_games = games if games is not None else cfg.eval.games
    writer = None
    if record:
        writer = GameLogWriter(
            out / "games.ndjson",
            meta={"players": manifest["players"], "mask": [float(x) for x in mask.weights]},
        )
    try:
        report = eval_against_league(
            params, roster, tracker, mask, n_games, seed,
            pfsp_cfg=cfg.pfsp_config(), players=manifest["players"],
            opponent_epsilon=cfg.environment.opponent_epsilon,
            max_moves=cfg.environment.max_moves, log_writer=writer,
        )
    finally:
        if writer is not None:
            writer.close()

    rows = [
        {"dimension": label, "total": repr(float(report.reward_totals[k])),
         "share_pct": repr(float(report.reward_share_pct[k]))}
        for k, label in enumerate(report.dimension_labels)
    ]
    _write_csv(out / "eval.csv", ["dimension", "total", "share_pct"], rows)
    doc = {
        "games": report.games,
        "win_rate": report.win_rate,
        "actions_total": report.actions_total,
        "lie_actions": report.lie_actions,
        "lie_action_fraction": report.lie_action_fraction,
        "truncated_games": report.truncated_games,
        "dimensions": rows,
        "action_type_counts": [
            {"action_type": t, "is_lie": lie, "count": c}
            for (t, lie), c in sorted(report.action_type_counts.items())
        ],
    }
    _maybe_json(out / "eval_report.json", doc, out_format)
    if plot:
        from .plots import eval_shares_figure

        eval_shares_figure(
            report.dimension_labels, report.reward_share_pct, out / "eval.svg"
        )
    click.echo(
        f"{report.games} games: win rate {100 * report.win_rate:.2f}%, "
        f"lie actions {100 * report.lie_action_fraction:.2f}%"
    )
    for row in rows:
        click.echo(f"  {row['dimension']}: share {float(row['share_pct']):.2f}%")
    if record:
        click.echo(f"decision log: {out / 'games.ndjson'}")


# ---------------------------------------------------------------------------
# counterfactual
# ---------------------------------------------------------------------------


@cli.command("counterfactual")
@common_options
@_params_option
@click.option("--logs", "logs_path", required=True,
              help="Recorded decision log from `eval --record`.")
@click.option("--masks", "masks_text", default="1,0,1,0;1,0,0,0;1,0,-1,0",
              show_default=True, help="Semicolon-separated alternative masks.")
def counterfactual(config_path, seed, out_dir, out_format, plot, params_path,
                   logs_path, masks_text):
    """Replay recorded decisions greedily under alternative masks."""
    cfg = _load_cfg(config_path)
    out = _out_dir(out_dir)
    params = load_params(params_path)
    labels = cfg.masks.labels
    masks = {}
    for text in masks_text.split(";"):
        text = text.strip()
        if text:
            masks[text] = _parse_mask(text, labels)
    if not masks:
        raise click.UsageError("at least one alternative mask is required")
    if not Path(logs_path).exists():
        raise click.UsageError(f"log file not found: {logs_path}")
    histograms = counterfactual_action_distribution(logs_path, params, masks)

    rows = []
    for mask_id, counter in histograms.items():
        for (action_type, lie), count in sorted(counter.items()):
            rows.append(
                {"mask_id": mask_id, "action_type": action_type,
                 "is_lie": int(lie), "count": count}
            )
    _write_csv(out / "counterfactual.csv", ["mask_id", "action_type", "is_lie", "count"], rows)
    _maybe_json(out / "counterfactual.json", rows, out_format)
    if plot:
        from .plots import counterfactual_figure

        counterfactual_figure(histograms, out / "counterfactual.svg")
    for mask_id, counter in histograms.items():
        total = sum(counter.values())
        lies = sum(c for (t, lie), c in counter.items() if lie)
        pct = 100.0 * lies / total if total else 0.0
        click.echo(f"{mask_id}: {total} decisions, {pct:.2f}% lie actions")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@cli.command("sweep")
@common_options
@_params_option
@_league_option
@click.option("--weights", "weights_text", default="-5..5", show_default=True,
              help="Lie-dimension weights: 'lo..hi' integer range or comma list.")
@click.option("--games", type=int, default=None, help="Games per weight.")
@click.option("--refresh-priorities", is_flag=True,
              help="Also rebuild PFSP priorities uniformly and sweep again.")
def sweep(config_path, seed, out_dir, out_format, plot, params_path, league_path,
          weights_text, games, refresh_priorities):
    """Vary the lie-dimension mask weight and record win and lie rates."""
    cfg = _load_cfg(config_path)
    out = _out_dir(out_dir)
    params = load_params(params_path)
    roster, tracker, manifest = _load_league(league_path)
    labels = cfg.masks.labels
    base_mask = StrategyMask(np.array(cfg.masks.inference), labels)
    weights = _parse_weights(weights_text)
    n_games = games if games is not None else cfg.eval.games
    common = dict(
        pfsp_cfg=cfg.pfsp_config(),
        players=manifest["players"],
        opponent_epsilon=cfg.environment.opponent_epsilon,
        max_moves=cfg.environment.max_moves,
    )
    points = lie_weight_sweep(
        params, roster, tracker, weights, n_games, seed, base_mask, **common
    )

    def rows_of(pts):
        return [
            {"weight": repr(p.weight), "win_pct": repr(p.win_pct),
             "lie_pct": repr(p.lie_pct), "games": p.games}
            for p in pts
        ]

    _write_csv(out / "sweep.csv", ["weight", "win_pct", "lie_pct", "games"], rows_of(points))
    _maybe_json(out / "sweep.json", rows_of(points), out_format)
    refreshed_points = None
    if refresh_priorities:
        _, refreshed_points = refresh_priorities_then_sweep(
            params, roster, cfg.pfsp_config(), weights, n_games, seed + 50_000,
            base_mask, players=manifest["players"],
            opponent_epsilon=cfg.environment.opponent_epsilon,
            max_moves=cfg.environment.max_moves,
        )
        _write_csv(out / "sweep_refreshed.csv",
                   ["weight", "win_pct", "lie_pct", "games"], rows_of(refreshed_points))
        _maybe_json(out / "sweep_refreshed.json", rows_of(refreshed_points), out_format)
    if plot:
        from .plots import sweep_figure

        sweep_figure(points, out / "sweep.svg", refreshed=refreshed_points)
    for p in points:
        click.echo(f"w={p.weight:+.1f}: win {p.win_pct:.2f}%, lies {p.lie_pct:.2f}%")
    click.echo(f"sweep written to {out / 'sweep.csv'}")


def cli_main(argv=None) -> int:
    """Entry point returning an exit code (0 success, 2 usage errors)."""
    try:
        cli.main(args=argv, prog_name="maskrl", standalone_mode=True)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())
