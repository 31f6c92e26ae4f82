"""Fixed action space and training-loop adapter around the rules engine.

The global action enumeration (for n players, |A| = 3n + 17):

    [Coup rel 1..n-1] [Assassinate rel 1..n-1] Tax [Steal rel 1..n-1]
    Exchange ForeignAid Income Pass Challenge
    [Block: Duke Ambassador Captain Contessa]
    [Discard: five roles] [Return: five roles]

Targets are seat-relative offsets. Elimination-forcing actions come first and
Pass precedes Challenge so that lowest-index tie-breaking (the degenerate
all-zero-mask policy) still drives games to completion.
"""

from __future__ import annotations

import numpy as np

from ..nnapprox import Observation
from .encoding import encode_event, encode_static, event_dim, static_dim
from .engine import (
    GameState,
    Move,
    MoveKind,
    N_REWARD_DIMS,
    REWARD_DIMS,
    Role,
    apply_move,
    is_lie,
    legal_moves,
    new_game,
)

__all__ = ["n_actions", "move_to_index", "index_to_move", "action_type_name", "CoupEnv"]

_BLOCK_CLAIM_ORDER = (Role.DUKE, Role.AMBASSADOR, Role.CAPTAIN, Role.CONTESSA)
_BLOCK_SLOT = {role: i for i, role in enumerate(_BLOCK_CLAIM_ORDER)}


def n_actions(n_players: int) -> int:
    return 3 * n_players + 17


def _rel(seat: int, target: int, n: int) -> int:
    return (target - seat) % n


def move_to_index(move: Move, seat: int, n: int) -> int:
    kind = move.kind
    if kind is MoveKind.COUP:
        return _rel(seat, move.target, n) - 1
    if kind is MoveKind.ASSASSINATE:
        return (n - 1) + _rel(seat, move.target, n) - 1
    if kind is MoveKind.TAX:
        return 2 * n - 2
    if kind is MoveKind.STEAL:
        return (2 * n - 1) + _rel(seat, move.target, n) - 1
    if kind is MoveKind.EXCHANGE:
        return 3 * n - 2
    if kind is MoveKind.FOREIGN_AID:
        return 3 * n - 1
    if kind is MoveKind.INCOME:
        return 3 * n
    if kind is MoveKind.PASS:
        return 3 * n + 1
    if kind is MoveKind.CHALLENGE:
        return 3 * n + 2
    if kind is MoveKind.BLOCK:
        return 3 * n + 3 + _BLOCK_SLOT[move.claim]
    if kind is MoveKind.DISCARD:
        return 3 * n + 7 + int(move.card)
    if kind is MoveKind.EXCHANGE_RETURN:
        return 3 * n + 12 + int(move.card)
    raise ValueError(f"unindexable move kind {kind}")


def index_to_move(index: int, seat: int, n: int) -> Move:
    if not 0 <= index < n_actions(n):
        raise ValueError(f"action index {index} out of range for {n} players")
    if index < n - 1:
        return Move(MoveKind.COUP, target=(seat + index + 1) % n)
    index -= n - 1
    if index < n - 1:
        return Move(MoveKind.ASSASSINATE, target=(seat + index + 1) % n)
    index -= n - 1
    if index == 0:
        return Move(MoveKind.TAX)
    index -= 1
    if index < n - 1:
        return Move(MoveKind.STEAL, target=(seat + index + 1) % n)
    index -= n - 1
    for kind in (MoveKind.EXCHANGE, MoveKind.FOREIGN_AID, MoveKind.INCOME,
                 MoveKind.PASS, MoveKind.CHALLENGE):
        if index == 0:
            return Move(kind)
        index -= 1
    if index < 4:
        return Move(MoveKind.BLOCK, claim=_BLOCK_CLAIM_ORDER[index])
    index -= 4
    if index < 5:
        return Move(MoveKind.DISCARD, card=Role(index))
    index -= 5
    return Move(MoveKind.EXCHANGE_RETURN, card=Role(index))


_TYPE_NAMES = {
    MoveKind.COUP: "coup",
    MoveKind.ASSASSINATE: "assassinate",
    MoveKind.TAX: "tax",
    MoveKind.STEAL: "steal",
    MoveKind.EXCHANGE: "exchange",
    MoveKind.FOREIGN_AID: "foreign_aid",
    MoveKind.INCOME: "income",
    MoveKind.PASS: "pass",
    MoveKind.CHALLENGE: "challenge",
    MoveKind.BLOCK: "block",
    MoveKind.DISCARD: "discard",
    MoveKind.EXCHANGE_RETURN: "exchange_return",
}


def action_type_name(index: int, n: int) -> str:
    return _TYPE_NAMES[index_to_move(index, 0, n).kind]


class _HistoryBuffer:
    """Append-only per-seat encoded history backed by a growing array.

    Views handed out by `view()` stay valid: growth copies into a fresh
    buffer, and appends never touch already-viewed rows.
    """

    __slots__ = ("_buf", "_n")

    def __init__(self, width: int, capacity: int = 64):
        self._buf = np.zeros((capacity, width))
        self._n = 0

    def append(self, row: np.ndarray) -> None:
        if self._n == self._buf.shape[0]:
            grown = np.zeros((self._buf.shape[0] * 2, self._buf.shape[1]))
            grown[: self._n] = self._buf
            self._buf = grown
        self._buf[self._n] = row
        self._n += 1

    def view(self) -> np.ndarray:
        return self._buf[: self._n]


class CoupEnv:
    """Multi-seat episode driver exposing the interface maskdqn trains against.

    reset -> repeat { current_seat, legal_actions, observe, step } until
    terminal. step() returns the per-seat reward vectors its resolution
    produced. Games exceeding max_moves are cut off with no winner.
    """

    def __init__(self, n_players: int = 3, max_moves: int = 10_000):
        self.n_seats = n_players
        self.n_actions = n_actions(n_players)
        self.static_dim = static_dim(n_players)
        self.event_dim = event_dim(n_players)
        self.n_reward_dims = N_REWARD_DIMS
        self.dimension_labels = REWARD_DIMS
        self.max_moves = max_moves
        self._state: GameState | None = None
        self._histories: list[_HistoryBuffer] = []
        self._consumed_events = 0
        self.truncated = False

    @property
    def state(self) -> GameState:
        return self._state

    def reset(self, rng: np.random.Generator) -> None:
        seed = int(rng.integers(0, 2**63))
        self._state = new_game(self.n_seats, seed)
        self._histories = [
            _HistoryBuffer(self.event_dim) for _ in range(self.n_seats)
        ]
        self._consumed_events = 0
        self.truncated = False

    def terminal(self) -> bool:
        return self._state.is_terminal or self.truncated

    def winner(self) -> int | None:
        return self._state.winner()

    def current_seat(self) -> int:
        return self._state.current_seat()

    def legal_actions(self) -> list[int]:
        seat = self._state.current_seat()
        moves = legal_moves(self._state, seat)
        return sorted(move_to_index(m, seat, self.n_seats) for m in moves)

    def legal_moves_with_indices(self, seat: int):
        moves = legal_moves(self._state, seat)
        pairs = [(move_to_index(m, seat, self.n_seats), m) for m in moves]
        pairs.sort(key=lambda p: p[0])
        return pairs

    def _sync_histories(self) -> None:
        history = self._state.history
        for idx in range(self._consumed_events, len(history)):
            ev = history[idx]
            for seat in range(self.n_seats):
                self._histories[seat].append(encode_event(ev, seat, self.n_seats))
        self._consumed_events = len(history)

    def observe(self, seat: int) -> Observation:
        self._sync_histories()
        return Observation(encode_static(self._state, seat), self._histories[seat].view())

    def is_lie_action(self, index: int, seat: int) -> bool:
        move = index_to_move(index, seat, self.n_seats)
        return is_lie(move, self._state.seats[seat].hidden)

    def action_type(self, index: int) -> str:
        return action_type_name(index, self.n_seats)

    def step(self, action_index: int):
        seat = self._state.current_seat()
        move = index_to_move(action_index, seat, self.n_seats)
        self._state, ledger, terminal = apply_move(self._state, seat, move, trusted=True)
        rewards = {s: vec.copy() for s, vec in ledger.by_seat.items()}
        if not terminal and self._state.move_count >= self.max_moves:
            self.truncated = True
        return rewards, self.terminal()
