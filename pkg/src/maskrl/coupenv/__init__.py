"""Coup game environment: rules engine, reward assignment, observation
encoding, action indexing, and game logs."""

from .engine import (
    DECK_SIZE,
    EventKind,
    GameEvent,
    GameState,
    IllegalMoveError,
    Move,
    MoveKind,
    MoveRewardLedger,
    N_REWARD_DIMS,
    Pending,
    Phase,
    PlayerSeat,
    REWARD_DIMS,
    ResolutionEvent,
    Role,
    WIN_REWARD,
    apply_move,
    assign_rewards,
    claimed_role,
    is_lie,
    legal_moves,
    new_game,
)
from .encoding import (
    encode_event,
    encode_observation,
    encode_static,
    event_dim,
    static_dim,
)
from .adapter import (
    CoupEnv,
    action_type_name,
    index_to_move,
    move_to_index,
    n_actions,
)
from .gamelog import GameLogWriter, read_game_log

__all__ = [
    "DECK_SIZE",
    "EventKind",
    "GameEvent",
    "GameState",
    "IllegalMoveError",
    "Move",
    "MoveKind",
    "MoveRewardLedger",
    "N_REWARD_DIMS",
    "Pending",
    "Phase",
    "PlayerSeat",
    "REWARD_DIMS",
    "ResolutionEvent",
    "Role",
    "WIN_REWARD",
    "apply_move",
    "assign_rewards",
    "claimed_role",
    "is_lie",
    "legal_moves",
    "new_game",
    "encode_event",
    "encode_observation",
    "encode_static",
    "event_dim",
    "static_dim",
    "CoupEnv",
    "action_type_name",
    "index_to_move",
    "move_to_index",
    "n_actions",
    "GameLogWriter",
    "read_game_log",
]
