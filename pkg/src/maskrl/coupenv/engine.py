"""Complete Coup rules engine: turn/block/challenge state machine, lying
semantics, and decomposed reward assignment.

Conventions the rules text leaves open (and which we fix for reproducibility):

* Responses are polled clockwise from the initiator; the first seat to block
  or challenge wins the right, and a block opens its own challenge poll that
  supersedes the action's. Blocks are polled before challenges on the action.
* ANY living non-initiator seat may block a blockable action.
* Role claims are never restricted (lying is legal); only resource-impossible
  moves are excluded (Coup without 7 coins, Assassinate without 3, stealing
  from a coinless seat).
* Assassination coins are spent at declaration and never refunded; a steal
  from a seat with 1 coin takes 1; there is no forced Coup at 10+ coins.
* An exchange draws up to 2 cards into the hand, then returns the same number
  one at a time (deck reshuffled when done). A challenged claim is proven by
  revealing the claimed card, which is shuffled back and replaced.

Game states are values: apply_move returns a new state sharing immutable
pieces with its predecessor. The RNG state rides inside the GameState, so
(seed, move sequence) fully determines every outcome.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum, IntEnum

import numpy as np

__all__ = [
    "Role",
    "MoveKind",
    "Move",
    "EventKind",
    "GameEvent",
    "PlayerSeat",
    "Phase",
    "Pending",
    "GameState",
    "MoveRewardLedger",
    "ResolutionEvent",
    "IllegalMoveError",
    "REWARD_DIMS",
    "N_REWARD_DIMS",
    "WIN_REWARD",
    "DECK_SIZE",
    "new_game",
    "legal_moves",
    "apply_move",
    "is_lie",
    "assign_rewards",
    "claimed_role",
]

DECK_SIZE = 15
COPIES_PER_ROLE = 3

REWARD_DIMS = ("win", "challenge", "lie", "bait")
N_REWARD_DIMS = 4
WIN_REWARD = 10.0
_WIN, _CHALLENGE, _LIE, _BAIT = range(4)


class Role(IntEnum):
    DUKE = 0
    AMBASSADOR = 1
    CAPTAIN = 2
    CONTESSA = 3
    ASSASSIN = 4


class MoveKind(IntEnum):
    COUP = 0
    ASSASSINATE = 1
    TAX = 2
    STEAL = 3
    EXCHANGE = 4
    FOREIGN_AID = 5
    INCOME = 6
    PASS = 7
    CHALLENGE = 8
    BLOCK = 9
    DISCARD = 10
    EXCHANGE_RETURN = 11


# Role implicitly claimed by declaring each action; None = any role may do it.
_ACTION_CLAIMS = {
    MoveKind.TAX: Role.DUKE,
    MoveKind.EXCHANGE: Role.AMBASSADOR,
    MoveKind.STEAL: Role.CAPTAIN,
    MoveKind.ASSASSINATE: Role.ASSASSIN,
}

# Roles able to block each action.
_BLOCK_ROLES = {
    MoveKind.FOREIGN_AID: (Role.DUKE,),
    MoveKind.STEAL: (Role.AMBASSADOR, Role.CAPTAIN),
    MoveKind.ASSASSINATE: (Role.CONTESSA,),
}


@dataclass(frozen=True)
class Move:
    kind: MoveKind
    target: int | None = None  # absolute seat index, for targeted actions
    claim: Role | None = None  # blocking role, for BLOCK
    card: Role | None = None  # for DISCARD / EXCHANGE_RETURN


def claimed_role(move: Move) -> Role | None:
    """The role a move claims to hold, or None for claim-free moves."""
    if move.kind == MoveKind.BLOCK:
        return move.claim
    return _ACTION_CLAIMS.get(move.kind)


def is_lie(move: Move, hand) -> bool:
    """True iff the move claims a role absent from the hand.

    Claim-free moves (Income, Foreign Aid, Coup, passes, challenges,
    discards) are never lies.
    """
    claim = claimed_role(move)
    if claim is None:
        return False
    return claim not in tuple(hand)


class EventKind(IntEnum):
    DECLARE_ACTION = 0
    DECLARE_BLOCK = 1
    PASS = 2
    CHALLENGE = 3
    REVEAL = 4
    DISCARD = 5
    COIN_DELTA = 6
    EXCHANGE = 7


@dataclass(frozen=True)
class GameEvent:
    """One public, immutable entry of the game history."""

    actor: int
    kind: EventKind
    action: MoveKind | None = None
    role: Role | None = None
    target: int | None = None
    amount: int | None = None


@dataclass(frozen=True)
class PlayerSeat:
    coins: int
    hidden: tuple[Role, ...]
    revealed: tuple[Role, ...]

    @property
    def alive(self) -> bool:
        return len(self.hidden) > 0


class Phase(Enum):
    AWAIT_ACTION = "AwaitAction"
    AWAIT_BLOCK = "AwaitBlock"
    AWAIT_CHALLENGE_ON_ACTION = "AwaitChallengeOnAction"
    AWAIT_CHALLENGE_ON_BLOCK = "AwaitChallengeOnBlock"
    AWAIT_DISCARD = "AwaitDiscard"
    AWAIT_EXCHANGE_KEEP = "AwaitExchangeKeep"
    FINISHED = "Finished"


@dataclass(frozen=True)
class Pending:
    """The in-flight action/block context between declaration and resolution."""

    actor: int
    action: MoveKind
    target: int | None
    action_was_lie: bool
    blocker: int | None = None
    block_claim: Role | None = None
    block_was_lie: bool = False
    queue: tuple[int, ...] = ()
    discarder: int | None = None
    continuation: str | None = None  # "resolve_action" | "block_stands" | "next_turn"
    returns_remaining: int = 0


@dataclass(frozen=True)
class GameState:
    seats: tuple[PlayerSeat, ...]
    deck: tuple[Role, ...]
    phase: Phase
    turn: int
    pending: Pending | None
    history: tuple[GameEvent, ...]
    rng_state: tuple
    move_count: int = 0

    @property
    def n_players(self) -> int:
        return len(self.seats)

    @property
    def is_terminal(self) -> bool:
        return self.phase is Phase.FINISHED

    def living_seats(self) -> tuple[int, ...]:
        return tuple(i for i, seat in enumerate(self.seats) if seat.alive)

    def winner(self) -> int | None:
        if self.phase is not Phase.FINISHED:
            return None
        alive = self.living_seats()
        return alive[0] if len(alive) == 1 else None

    def current_seat(self) -> int | None:
        """The seat entitled to move, or None when the game is over."""
        if self.phase is Phase.AWAIT_ACTION:
            return self.turn
        if self.phase in (
            Phase.AWAIT_BLOCK,
            Phase.AWAIT_CHALLENGE_ON_ACTION,
            Phase.AWAIT_CHALLENGE_ON_BLOCK,
        ):
            return self.pending.queue[0]
        if self.phase is Phase.AWAIT_DISCARD:
            return self.pending.discarder
        if self.phase is Phase.AWAIT_EXCHANGE_KEEP:
            return self.pending.actor
        return None


class IllegalMoveError(ValueError):
    """A move outside legal_moves(state, seat), with the reason."""


@dataclass(frozen=True)
class ResolutionEvent:
    """A reward-triggering outcome produced while resolving a move."""

    kind: str  # "win" | "challenge_won" | "lie_completed" | "bait"
    seat: int


@dataclass
class MoveRewardLedger:
    """Per-seat decomposed rewards accrued by a single move's resolution."""

    by_seat: dict[int, np.ndarray]

    def vector(self, seat: int, n_dims: int = N_REWARD_DIMS) -> np.ndarray:
        return self.by_seat.get(seat, np.zeros(n_dims))

    @property
    def total(self) -> float:
        return float(sum(v.sum() for v in self.by_seat.values()))


def assign_rewards(events) -> MoveRewardLedger:
    """Map resolution outcomes to the four reward dimensions.

    win -> +10 on the win dimension; a successful challenge, a completed
    lie, and a successful bait each pay +1 on their dimension. There are no
    negative payouts.
    """
    by_seat: dict[int, np.ndarray] = {}

    def vec(seat: int) -> np.ndarray:
        if seat not in by_seat:
            by_seat[seat] = np.zeros(N_REWARD_DIMS)
        return by_seat[seat]

    for ev in events:
        if ev.kind == "win":
            vec(ev.seat)[_WIN] += WIN_REWARD
        elif ev.kind == "challenge_won":
            vec(ev.seat)[_CHALLENGE] += 1.0
        elif ev.kind == "lie_completed":
            vec(ev.seat)[_LIE] += 1.0
        elif ev.kind == "bait":
            vec(ev.seat)[_BAIT] += 1.0
        else:
            raise ValueError(f"unknown resolution event kind {ev.kind!r}")
    return MoveRewardLedger(by_seat)


def new_game(n_players: int, seed: int) -> GameState:
    """Deal a fresh game: shuffled 15-card deck, 2 cards and 2 coins each."""
    if not 2 <= n_players <= 6:
        raise ValueError(f"n_players must be between 2 and 6, got {n_players}")
    rng = random.Random(seed)
    deck = [role for role in Role for _ in range(COPIES_PER_ROLE)]
    rng.shuffle(deck)
    seats = []
    for _ in range(n_players):
        seats.append(PlayerSeat(coins=2, hidden=(deck.pop(0), deck.pop(0)), revealed=()))
    return GameState(
        seats=tuple(seats),
        deck=tuple(deck),
        phase=Phase.AWAIT_ACTION,
        turn=0,
        pending=None,
        history=(),
        rng_state=rng.getstate(),
    )


def _poll_order(n: int, alive_fn, start_after: int, exclude) -> tuple[int, ...]:
    """Living seats clockwise from start_after+1, minus the excluded ones."""
    order = []
    for step in range(1, n + 1):
        seat = (start_after + step) % n
        if seat in exclude or not alive_fn(seat):
            continue
        order.append(seat)
    return tuple(order)


def legal_moves(state: GameState, seat: int) -> tuple[Move, ...]:
    """Moves available to `seat` right now; errors if it is not their turn.

    In the action phase every declarable action is offered regardless of the
    hand (lying is legal); only resource-impossible moves are withheld.
    """
    entitled = state.current_seat()
    if entitled is None:
        raise IllegalMoveError("the game is over")
    if seat != entitled:
        raise IllegalMoveError(
            f"seat {seat} queried out of phase; seat {entitled} is to move in {state.phase.value}"
        )
    seats = state.seats
    me = seats[seat]

    if state.phase is Phase.AWAIT_ACTION:
        others = [
            (seat + off) % len(seats)
            for off in range(1, len(seats))
            if seats[(seat + off) % len(seats)].alive
        ]
        moves: list[Move] = []
        if me.coins >= 7:
            moves += [Move(MoveKind.COUP, target=t) for t in others]
        if me.coins >= 3:
            moves += [Move(MoveKind.ASSASSINATE, target=t) for t in others]
        moves.append(Move(MoveKind.TAX))
        moves += [Move(MoveKind.STEAL, target=t) for t in others if seats[t].coins >= 1]
        moves.append(Move(MoveKind.EXCHANGE))
        moves.append(Move(MoveKind.FOREIGN_AID))
        moves.append(Move(MoveKind.INCOME))
        return tuple(moves)

    if state.phase is Phase.AWAIT_BLOCK:
        blocks = _BLOCK_ROLES[state.pending.action]
        return (Move(MoveKind.PASS),) + tuple(Move(MoveKind.BLOCK, claim=r) for r in blocks)

    if state.phase in (Phase.AWAIT_CHALLENGE_ON_ACTION, Phase.AWAIT_CHALLENGE_ON_BLOCK):
        return (Move(MoveKind.PASS), Move(MoveKind.CHALLENGE))

    if state.phase is Phase.AWAIT_DISCARD:
        roles = sorted(set(me.hidden))
        return tuple(Move(MoveKind.DISCARD, card=r) for r in roles)

    if state.phase is Phase.AWAIT_EXCHANGE_KEEP:
        roles = sorted(set(me.hidden))
        return tuple(Move(MoveKind.EXCHANGE_RETURN, card=r) for r in roles)

    raise IllegalMoveError(f"no moves available in phase {state.phase.value}")


class _Ctx:
    """Mutable working copy of a GameState while one move resolves."""

    def __init__(self, state: GameState):
        self.n = state.n_players
        self.coins = [s.coins for s in state.seats]
        self.hidden = [list(s.hidden) for s in state.seats]
        self.revealed = [list(s.revealed) for s in state.seats]
        self.deck = list(state.deck)
        self.turn = state.turn
        self.phase = state.phase
        self.pending = state.pending
        self.events: list[GameEvent] = []
        self.outcomes: list[ResolutionEvent] = []
        self._rng_state = state.rng_state
        self._rng: random.Random | None = None

    # RNG state is only materialized (and re-serialized) when a move actually
    # consumes randomness; most moves leave it untouched.
    def rng(self) -> random.Random:
        if self._rng is None:
            self._rng = random.Random()
            self._rng.setstate(self._rng_state)
        return self._rng

    def rng_state(self) -> tuple:
        return self._rng.getstate() if self._rng is not None else self._rng_state

    def alive(self, seat: int) -> bool:
        return len(self.hidden[seat]) > 0

    def living(self) -> list[int]:
        return [i for i in range(self.n) if self.alive(i)]

    def emit(self, **kw) -> None:
        self.events.append(GameEvent(**kw))

    def coin_delta(self, seat: int, amount: int) -> None:
        self.coins[seat] += amount
        if self.coins[seat] < 0:
            raise AssertionError("coin balance went negative")
        self.emit(actor=seat, kind=EventKind.COIN_DELTA, amount=amount)

    def advance_turn(self) -> None:
        nxt = (self.turn + 1) % self.n
        while not self.alive(nxt):
            nxt = (nxt + 1) % self.n
        self.turn = nxt
        self.phase = Phase.AWAIT_ACTION
        self.pending = None

    def finish_if_won(self) -> bool:
        living = self.living()
        if len(living) == 1:
            self.outcomes.append(ResolutionEvent("win", living[0]))
            self.phase = Phase.FINISHED
            self.pending = None
            return True
        return False

    def reveal_and_redraw(self, seat: int, role: Role) -> None:
        """Prove a challenged claim: show the card, shuffle it back, redraw."""
        self.hidden[seat].remove(role)
        self.emit(actor=seat, kind=EventKind.REVEAL, role=role)
        self.deck.append(role)
        rng = self.rng()
        rng.shuffle(self.deck)
        self.hidden[seat].append(self.deck.pop(0))

    def start_discard(self, seat: int, continuation: str) -> None:
        self.pending = replace(self.pending, discarder=seat, continuation=continuation, queue=())
        self.phase = Phase.AWAIT_DISCARD

    def resolve_action(self) -> None:
        """Carry out a successfully completed declared action."""
        pending = self.pending
        actor, action, target = pending.actor, pending.action, pending.target
        if target is not None and not self.alive(target):
            # The target fell to an interleaved discard; nothing left to do.
            self.advance_turn()
            return
        if pending.action_was_lie:
            self.outcomes.append(ResolutionEvent("lie_completed", actor))
        if action is MoveKind.FOREIGN_AID:
            self.coin_delta(actor, +2)
            self.advance_turn()
        elif action is MoveKind.TAX:
            self.coin_delta(actor, +3)
            self.advance_turn()
        elif action is MoveKind.STEAL:
            amount = min(2, self.coins[target])
            if amount:
                self.coin_delta(target, -amount)
                self.coin_delta(actor, +amount)
            self.advance_turn()
        elif action is MoveKind.ASSASSINATE:
            self.start_discard(target, "next_turn")
        elif action is MoveKind.EXCHANGE:
            drawn = min(2, len(self.deck))
            for _ in range(drawn):
                self.hidden[actor].append(self.deck.pop(0))
            self.emit(actor=actor, kind=EventKind.EXCHANGE, amount=drawn)
            if drawn == 0:
                self.advance_turn()
            else:
                self.pending = replace(pending, returns_remaining=drawn, queue=())
                self.phase = Phase.AWAIT_EXCHANGE_KEEP
        else:
            raise AssertionError(f"action {action} never pends")

    def freeze(self, base: GameState) -> GameState:
        seats = tuple(
            PlayerSeat(self.coins[i], tuple(self.hidden[i]), tuple(self.revealed[i]))
            for i in range(self.n)
        )
        return GameState(
            seats=seats,
            deck=tuple(self.deck),
            phase=self.phase,
            turn=self.turn,
            pending=self.pending,
            history=base.history + tuple(self.events),
            rng_state=self.rng_state(),
            move_count=base.move_count + 1,
        )


def apply_move(state: GameState, seat: int, move: Move, trusted: bool = False):
    """Advance the state machine by one move.

    Returns (new state, per-seat reward ledger, terminal flag). `trusted`
    skips the legality re-check for callers that just sampled from
    legal_moves (the simulation hot path).
    """
    if not trusted:
        legal = legal_moves(state, seat)
        if move not in legal:
            raise IllegalMoveError(
                f"move {move} is not legal for seat {seat} in {state.phase.value}"
            )
    ctx = _Ctx(state)
    handler = _PHASE_HANDLERS[state.phase]
    handler(ctx, seat, move)
    ledger = assign_rewards(ctx.outcomes)
    new_state = ctx.freeze(state)
    return new_state, ledger, new_state.is_terminal


# --- phase handlers ---------------------------------------------------------


def _handle_action(ctx: _Ctx, seat: int, move: Move) -> None:
    kind = move.kind
    claim = claimed_role(move)
    was_lie = claim is not None and claim not in ctx.hidden[seat]
    ctx.emit(
        actor=seat,
        kind=EventKind.DECLARE_ACTION,
        action=kind,
        role=claim,
        target=move.target,
    )
    if kind is MoveKind.INCOME:
        ctx.coin_delta(seat, +1)
        ctx.advance_turn()
        return
    if kind is MoveKind.COUP:
        ctx.coin_delta(seat, -7)
        ctx.pending = Pending(actor=seat, action=kind, target=move.target, action_was_lie=False)
        ctx.start_discard(move.target, "next_turn")
        return
    if kind is MoveKind.ASSASSINATE:
        ctx.coin_delta(seat, -3)  # paid on the attempt, never refunded

    pending = Pending(
        actor=seat,
        action=kind,
        target=move.target,
        action_was_lie=was_lie,
        queue=_poll_order(ctx.n, ctx.alive, seat, {seat}),
    )
    ctx.pending = pending
    if kind in _BLOCK_ROLES:
        ctx.phase = Phase.AWAIT_BLOCK
    else:
        # Tax and Exchange cannot be blocked, only challenged.
        ctx.phase = Phase.AWAIT_CHALLENGE_ON_ACTION


def _handle_block_poll(ctx: _Ctx, seat: int, move: Move) -> None:
    pending = ctx.pending
    if move.kind is MoveKind.PASS:
        ctx.emit(actor=seat, kind=EventKind.PASS)
        queue = pending.queue[1:]
        if queue:
            ctx.pending = replace(pending, queue=queue)
            return
        # Nobody blocked. Claim-bearing actions still face a challenge poll;
        # Foreign Aid claims nothing and resolves now.
        if pending.action in _ACTION_CLAIMS:
            ctx.pending = replace(
                pending, queue=_poll_order(ctx.n, ctx.alive, pending.actor, {pending.actor})
            )
            ctx.phase = Phase.AWAIT_CHALLENGE_ON_ACTION
        else:
            ctx.resolve_action()
        return

    # A block claim; the first blocker wins the right.
    block_lie = move.claim not in ctx.hidden[seat]
    ctx.emit(actor=seat, kind=EventKind.DECLARE_BLOCK, role=move.claim, target=pending.actor)
    ctx.pending = replace(
        pending,
        blocker=seat,
        block_claim=move.claim,
        block_was_lie=block_lie,
        queue=_poll_order(ctx.n, ctx.alive, seat, {seat}),
    )
    ctx.phase = Phase.AWAIT_CHALLENGE_ON_BLOCK


def _handle_challenge_on_action(ctx: _Ctx, seat: int, move: Move) -> None:
    pending = ctx.pending
    if move.kind is MoveKind.PASS:
        ctx.emit(actor=seat, kind=EventKind.PASS)
        queue = pending.queue[1:]
        if queue:
            ctx.pending = replace(pending, queue=queue)
        else:
            ctx.resolve_action()
        return

    ctx.emit(actor=seat, kind=EventKind.CHALLENGE, target=pending.actor)
    claim = _ACTION_CLAIMS[pending.action]
    if claim in ctx.hidden[pending.actor]:
        # Proven: the challenger bit on an honest claim and pays a card.
        ctx.outcomes.append(ResolutionEvent("bait", pending.actor))
        ctx.reveal_and_redraw(pending.actor, claim)
        ctx.start_discard(seat, "resolve_action")
    else:
        ctx.outcomes.append(ResolutionEvent("challenge_won", seat))
        ctx.start_discard(pending.actor, "next_turn")  # the action is not carried out


def _handle_challenge_on_block(ctx: _Ctx, seat: int, move: Move) -> None:
    pending = ctx.pending
    if move.kind is MoveKind.PASS:
        ctx.emit(actor=seat, kind=EventKind.PASS)
        queue = pending.queue[1:]
        if queue:
            ctx.pending = replace(pending, queue=queue)
            return
        _block_stands(ctx)
        return

    ctx.emit(actor=seat, kind=EventKind.CHALLENGE, target=pending.blocker)
    if pending.block_claim in ctx.hidden[pending.blocker]:
        ctx.outcomes.append(ResolutionEvent("bait", pending.blocker))
        ctx.reveal_and_redraw(pending.blocker, pending.block_claim)
        ctx.start_discard(seat, "block_stands")
    else:
        ctx.outcomes.append(ResolutionEvent("challenge_won", seat))
        ctx.start_discard(pending.blocker, "resolve_action")


def _block_stands(ctx: _Ctx) -> None:
    """The block held: the action is not carried out."""
    pending = ctx.pending
    if pending.block_was_lie:
        ctx.outcomes.append(ResolutionEvent("lie_completed", pending.blocker))
    ctx.advance_turn()


def _handle_discard(ctx: _Ctx, seat: int, move: Move) -> None:
    pending = ctx.pending
    ctx.hidden[seat].remove(move.card)
    ctx.revealed[seat].append(move.card)
    ctx.emit(actor=seat, kind=EventKind.DISCARD, role=move.card)
    if ctx.finish_if_won():
        return
    continuation = pending.continuation
    if continuation == "resolve_action":
        ctx.resolve_action()
    elif continuation == "block_stands":
        _block_stands(ctx)
    else:  # "next_turn" (covers a canceled action as well)
        ctx.advance_turn()


def _handle_exchange_return(ctx: _Ctx, seat: int, move: Move) -> None:
    pending = ctx.pending
    ctx.hidden[seat].remove(move.card)
    ctx.deck.append(move.card)
    remaining = pending.returns_remaining - 1
    if remaining == 0:
        ctx.rng().shuffle(ctx.deck)
        ctx.advance_turn()
    else:
        ctx.pending = replace(pending, returns_remaining=remaining)


_PHASE_HANDLERS = {
    Phase.AWAIT_ACTION: _handle_action,
    Phase.AWAIT_BLOCK: _handle_block_poll,
    Phase.AWAIT_CHALLENGE_ON_ACTION: _handle_challenge_on_action,
    Phase.AWAIT_CHALLENGE_ON_BLOCK: _handle_challenge_on_block,
    Phase.AWAIT_DISCARD: _handle_discard,
    Phase.AWAIT_EXCHANGE_KEEP: _handle_exchange_return,
}
