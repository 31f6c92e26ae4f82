"""Newline-delimited game logs.

First line is a version header; subsequent lines are JSON records of three
kinds: "game" (one per game), "event" (the public history), and "decision"
(optional, per decision point when recording is enabled: the static features,
the history prefix length, the legal action indices with their types and lie
flags, and the action taken). Decision records plus the game's events are
enough to rebuild every observation exactly, which is what the counterfactual
harness replays.
"""

from __future__ import annotations

import json
from pathlib import Path

from .engine import EventKind, GameEvent, MoveKind, Role

__all__ = ["GameLogWriter", "read_game_log", "LOG_FORMAT", "LOG_VERSION"]

LOG_FORMAT = "coup-gamelog"
LOG_VERSION = 1


class GameLogWriter:
    def __init__(self, path, meta: dict | None = None):
        self._fh = open(path, "w", encoding="utf-8")
        header = {"format": LOG_FORMAT, "version": LOG_VERSION}
        if meta:
            header["meta"] = meta
        self._write(header)

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def game(self, game_index: int, n_players: int, learner_seat: int) -> None:
        self._write(
            {"kind": "game", "game": game_index, "players": n_players,
             "learner_seat": learner_seat}
        )

    def event(self, game_index: int, ev: GameEvent) -> None:
        record = {"kind": "event", "game": game_index, "actor": ev.actor,
                  "event": int(ev.kind)}
        if ev.action is not None:
            record["action"] = int(ev.action)
        if ev.role is not None:
            record["role"] = int(ev.role)
        if ev.target is not None:
            record["target"] = ev.target
        if ev.amount is not None:
            record["amount"] = ev.amount
        self._write(record)

    def decision(
        self,
        game_index: int,
        seat: int,
        n_events: int,
        static,
        legal,
        action_types,
        lie_flags,
        action: int,
    ) -> None:
        self._write(
            {
                "kind": "decision",
                "game": game_index,
                "seat": seat,
                "n_events": n_events,
                "static": [float(x) for x in static],
                "legal": [int(a) for a in legal],
                "types": list(action_types),
                "lies": [bool(x) for x in lie_flags],
                "action": int(action),
            }
        )

    def result(self, game_index: int, winner: int | None, moves: int) -> None:
        self._write({"kind": "result", "game": game_index, "winner": winner, "moves": moves})

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_game_log(path):
    """Return (header dict, list of records); events get GameEvent objects."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty game log")
    header = json.loads(lines[0])
    if header.get("format") != LOG_FORMAT:
        raise ValueError(f"{path}: not a {LOG_FORMAT} file")
    if header.get("version") != LOG_VERSION:
        raise ValueError(
            f"{path}: unsupported log version {header.get('version')}, expected {LOG_VERSION}"
        )
    records = []
    for line in lines[1:]:
        rec = json.loads(line)
        if rec["kind"] == "event":
            rec["event_obj"] = GameEvent(
                actor=rec["actor"],
                kind=EventKind(rec["event"]),
                action=MoveKind(rec["action"]) if "action" in rec else None,
                role=Role(rec["role"]) if "role" in rec else None,
                target=rec.get("target"),
                amount=rec.get("amount"),
            )
        records.append(rec)
    return header, records
