"""Seat-relative observation encoding.

Static features (public board + local hand) and a variable-length history of
per-event one-hot encodings. Everything is relative to the observing seat, so
positionally symmetric situations encode identically, and nothing about other
players' hidden cards ever enters the encoding.
"""

from __future__ import annotations

import numpy as np

from ..nnapprox import Observation
from .engine import EventKind, GameEvent, GameState, MoveKind, Role

__all__ = [
    "static_dim",
    "event_dim",
    "encode_static",
    "encode_event",
    "encode_observation",
]

_N_ROLES = len(Role)
_N_EVENT_KINDS = len(EventKind)
# Declarable action kinds, in MoveKind order (COUP..INCOME).
_ACTION_KINDS = (
    MoveKind.COUP,
    MoveKind.ASSASSINATE,
    MoveKind.TAX,
    MoveKind.STEAL,
    MoveKind.EXCHANGE,
    MoveKind.FOREIGN_AID,
    MoveKind.INCOME,
)
_ACTION_SLOT = {kind: i for i, kind in enumerate(_ACTION_KINDS)}

# Per-seat static block: coins, life count, revealed copies per role.
_PER_SEAT = 2 + _N_ROLES


def static_dim(n_players: int) -> int:
    return _PER_SEAT * n_players + _N_ROLES


def event_dim(n_players: int) -> int:
    # relative actor | event kind | action kind | role | relative target | amount
    return n_players + _N_EVENT_KINDS + len(_ACTION_KINDS) + _N_ROLES + n_players + 1


def encode_static(state: GameState, seat: int) -> np.ndarray:
    """Public per-seat counters in seat-relative order, then the local hand.

    Counters are raw counts (coins, lives, revealed copies per role); the
    local block counts the observer's own hidden cards per role.
    """
    n = state.n_players
    out = np.zeros(static_dim(n))
    for offset in range(n):
        other = state.seats[(seat + offset) % n]
        base = offset * _PER_SEAT
        out[base] = other.coins
        out[base + 1] = len(other.hidden)
        for role in other.revealed:
            out[base + 2 + int(role)] += 1.0
    local = n * _PER_SEAT
    for role in state.seats[seat].hidden:
        out[local + int(role)] += 1.0
    return out


def encode_event(event: GameEvent, seat: int, n_players: int) -> np.ndarray:
    out = np.zeros(event_dim(n_players))
    out[(event.actor - seat) % n_players] = 1.0
    off = n_players
    out[off + int(event.kind)] = 1.0
    off += _N_EVENT_KINDS
    if event.action is not None:
        out[off + _ACTION_SLOT[event.action]] = 1.0
    off += len(_ACTION_KINDS)
    if event.role is not None:
        out[off + int(event.role)] = 1.0
    off += _N_ROLES
    if event.target is not None:
        out[off + (event.target - seat) % n_players] = 1.0
    off += n_players
    if event.amount is not None:
        out[off] = float(event.amount)
    return out


def encode_observation(state: GameState, seat: int) -> Observation:
    """Full observation for one seat: static snapshot plus encoded history."""
    n = state.n_players
    if state.history:
        history = np.stack([encode_event(ev, seat, n) for ev in state.history])
    else:
        history = np.zeros((0, event_dim(n)))
    return Observation(encode_static(state, seat), history)
