"""Masked DQN: replay buffer, lagged target parameters, the masked bootstrap
target, and the training loop.

The learner owns the parameters and the buffer; episodes are simulated
single-threaded here, with opponents acting from frozen parameter snapshots.
Only the learning seat's transitions enter the buffer. Training environments
implement a small duck-typed interface (see CoupEnv and MdpEnv):

    n_seats, n_actions, static_dim, event_dim, n_reward_dims, dimension_labels
    reset(rng); terminal(); winner(); current_seat(); legal_actions()
    observe(seat) -> Observation; step(action) -> (rewards_by_seat, terminal)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nnapprox import (
    ApproximatorConfig,
    IncrementalEncoder,
    NetworkParams,
    Observation,
    clip_gradients,
    forward_values,
    init_params,
    loss_and_gradient,
    sgd_step,
    _forward_batch,
)
from .rlcore import StrategyMask, masked_argmax
from .tabular import TabularMDP

__all__ = [
    "Transition",
    "ReplayBuffer",
    "DqnConfig",
    "compute_targets",
    "QNetPolicy",
    "MdpEnv",
    "EpisodeMetrics",
    "TrainResult",
    "train",
    "greedy_policy_table",
]


@dataclass(frozen=True)
class Transition:
    """One replayed step: (s, a, r-vector, s') plus the terminal flag.

    next_legal carries the legal action subset at s' (None = every action);
    the bootstrap argmax ranges over it so the policy never bootstraps from
    moves it could not take.
    """

    obs: Observation
    action: int
    reward: np.ndarray
    next_obs: Observation
    terminal: bool
    next_legal: tuple[int, ...] | None = None


class ReplayBuffer:
    """Bounded FIFO of transitions; uniform sampling without replacement."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._storage: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, transition: Transition) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def __iter__(self):
        """Oldest to newest."""
        if len(self._storage) < self.capacity:
            yield from self._storage
        else:
            yield from self._storage[self._next :]
            yield from self._storage[: self._next]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._storage):
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer of {len(self._storage)}"
            )
        idx = rng.choice(len(self._storage), size=batch_size, replace=False)
        return [self._storage[i] for i in idx]


@dataclass(frozen=True)
class DqnConfig:
    """Replay/training knobs. update_every=1 reproduces the canonical
    update-per-step loop; larger values thin the update cadence for desk-scale
    runs. Target sync counts performed updates."""

    episodes: int
    batch_size: int = 32
    capacity: int = 100_000
    target_period: int = 1000
    gamma: float = 0.95
    alpha: float = 1e-3
    seed: int = 0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.1
    update_every: int = 1
    grad_clip: float = 10.0

    def __post_init__(self) -> None:
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.batch_size > self.capacity:
            raise ValueError("batch size cannot exceed buffer capacity")
        if self.target_period < 1:
            raise ValueError("target period must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.update_every < 1:
            raise ValueError("update_every must be at least 1")

    def epsilon_for(self, episode: int) -> float:
        decay_until = max(1, int(self.episodes * self.epsilon_decay_fraction))
        if episode >= decay_until:
            return self.epsilon_end
        frac = episode / decay_until
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def compute_targets(
    batch: Sequence[Transition],
    target_params: NetworkParams,
    mask: StrategyMask,
    gamma: float,
) -> np.ndarray:
    """Masked bootstrap targets, one K-vector per transition.

    y = r + gamma * Q(s', a*_m(s') | w') when s' is not terminal, else y = r;
    the bootstrap keeps the FULL K-vector at the masked-argmax action, so
    masked dimensions keep learning.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    k = target_params.config.n_dims
    targets = np.stack([np.asarray(t.reward, dtype=np.float64) for t in batch])
    if targets.shape[1] != k:
        raise ValueError(f"rewards have {targets.shape[1]} dims, network has K={k}")
    live = [i for i, t in enumerate(batch) if not t.terminal]
    if live:
        statics = np.stack([batch[i].next_obs.static for i in live])
        histories = [batch[i].next_obs.history for i in live]
        rows, _ = _forward_batch(target_params, statics, histories)
        for j, i in zip(range(len(live)), live):
            a_star = masked_argmax(rows[j], mask, batch[i].next_legal)
            targets[i] += gamma * rows[j, a_star]
    return targets


class QNetPolicy:
    """Epsilon-greedy over masked network outputs.

    Keeps an incremental recurrent cache per episode; set_params marks the
    cache stale so the next decision re-unrolls with the new weights (acting
    always uses the current parameters).
    """

    def __init__(self, params: NetworkParams, mask: StrategyMask, epsilon: float = 0.0):
        self.mask = mask
        self.epsilon = epsilon
        self._params = params
        self._encoder = IncrementalEncoder(params)

    def begin_episode(self) -> None:
        self._encoder.reset(self._params)

    def set_params(self, params: NetworkParams) -> None:
        if params is not self._params:
            self._params = params
            self._encoder = None  # rebuilt lazily from the full history

    def q_values(self, obs: Observation) -> np.ndarray:
        if self._encoder is None:
            self._encoder = IncrementalEncoder(self._params)
        return self._encoder.q_values(obs)

    def act(self, obs: Observation, legal: Sequence[int], rng: np.random.Generator) -> int:
        legal = sorted(legal)
        if self.epsilon > 0.0 and rng.random() < self.epsilon:
            return int(legal[rng.integers(len(legal))])
        return masked_argmax(self.q_values(obs), self.mask, legal)


class MdpEnv:
    """A finite MDP wrapped as a single-seat training environment.

    Observations are one-hot state indicators with an empty event history.
    Episodes end at terminal states; hitting the step cap ends the episode
    WITHOUT the terminal flag so bootstrapping stays unbiased.
    """

    def __init__(self, mdp: TabularMDP, max_steps: int = 100):
        self.mdp = mdp
        self.n_seats = 1
        self.n_actions = mdp.n_actions
        self.static_dim = mdp.n_states
        self.event_dim = 1
        self.n_reward_dims = mdp.n_dims
        self.dimension_labels = tuple(f"dim{i}" for i in range(mdp.n_dims))
        self.max_steps = max_steps
        self._cum_p = np.cumsum(mdp.transition, axis=2)
        self._starts = np.flatnonzero(~mdp.terminal)
        self._state = 0
        self._steps = 0
        self._done = False
        self.truncated = False

    def reset(self, rng: np.random.Generator) -> None:
        self._state = int(self._starts[rng.integers(self._starts.size)])
        self._steps = 0
        self._done = False
        self.truncated = False
        self._rng = rng

    def terminal(self) -> bool:
        return self._done

    def winner(self) -> int | None:
        return None

    def current_seat(self) -> int:
        return 0

    def legal_actions(self) -> list[int]:
        return list(range(self.n_actions))

    def observe(self, seat: int) -> Observation:
        static = np.zeros(self.static_dim)
        static[self._state] = 1.0
        return Observation(static, np.zeros((0, self.event_dim)))

    def step(self, action: int):
        s = self._state
        u = self._rng.random()
        s2 = int(np.searchsorted(self._cum_p[s, action], u, side="right"))
        s2 = min(s2, self.mdp.n_states - 1)
        reward = self.mdp.reward[s, action, s2].copy()
        self._state = s2
        self._steps += 1
        if self.mdp.terminal[s2]:
            self._done = True
        elif self._steps >= self.max_steps:
            self._done = True
            self.truncated = True
        return {0: reward}, self._done


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    rewards: np.ndarray  # learner's summed reward vector over the episode
    win: bool
    loss: float  # mean update loss this episode (nan when no updates ran)
    epsilon: float
    steps: int


@dataclass(frozen=True)
class TrainResult:
    params: NetworkParams
    metrics: tuple[EpisodeMetrics, ...]
    learner_steps: int


def train(
    env,
    league_hook,
    config: DqnConfig,
    mask_train: StrategyMask,
    net_config: ApproximatorConfig | None = None,
    initial_params: NetworkParams | None = None,
    epsilon_fn: Callable[[int], float] | None = None,
    opponent_epsilon: float = 0.05,
    metrics_cb: Callable[[EpisodeMetrics], None] | None = None,
) -> TrainResult:
    """Run the masked DQN loop on `env`.

    league_hook (optional) supplies opponents per episode and receives the
    outcome: select_opponents(episode, learner_params, rng) -> list of
    (entry_id | None, params | None) with None params meaning a copy of the
    current learner; record_outcome(opponent_ids, learner_won).
    """
    if initial_params is None:
        if net_config is None:
            net_config = ApproximatorConfig(
                static_dim=env.static_dim,
                event_dim=env.event_dim,
                n_actions=env.n_actions,
                n_dims=env.n_reward_dims,
                seed=config.seed,
            )
        params = init_params(net_config)
    else:
        params = initial_params
    if params.config.n_actions != env.n_actions or params.config.n_dims != env.n_reward_dims:
        raise ValueError("network output shape does not match the environment")
    if mask_train.k != env.n_reward_dims:
        raise ValueError("training mask dimension does not match the environment")

    rng = np.random.default_rng(config.seed)
    target = params
    buffer = ReplayBuffer(config.capacity)
    eps_of = epsilon_fn if epsilon_fn is not None else config.epsilon_for
    learner_steps = 0
    decision_ticks = 0
    metrics: list[EpisodeMetrics] = []
    k = env.n_reward_dims

    for episode in range(config.episodes):
        eps = float(eps_of(episode))
        learner_policy = QNetPolicy(params, mask_train, eps)
        learner_policy.begin_episode()

        opponent_ids: list = []
        opponents: list[QNetPolicy] = []
        if env.n_seats > 1:
            specs = (
                league_hook.select_opponents(episode, params, rng)
                if league_hook is not None
                else [(None, None)] * (env.n_seats - 1)
            )
            for entry_id, opp_params in specs:
                opp_eps = eps if opp_params is None else opponent_epsilon
                policy = QNetPolicy(opp_params or params, mask_train, opp_eps)
                policy.begin_episode()
                opponents.append(policy)
                opponent_ids.append(entry_id)

        learner_seat = int(rng.integers(env.n_seats)) if env.n_seats > 1 else 0
        seat_policies: dict[int, QNetPolicy] = {learner_seat: learner_policy}
        opp_iter = iter(opponents)
        for seat in range(env.n_seats):
            if seat != learner_seat:
                seat_policies[seat] = next(opp_iter)

        env.reset(rng)
        episode_rewards = np.zeros(k)
        pending: tuple[Observation, int] | None = None
        accumulated = np.zeros(k)
        losses: list[float] = []
        steps = 0

        def learn_tick() -> None:
            nonlocal params, target, learner_steps, decision_ticks
            decision_ticks += 1
            if len(buffer) < config.batch_size:
                return
            if decision_ticks % config.update_every != 0:
                return
            batch = buffer.sample(config.batch_size, rng)
            targets = compute_targets(batch, target, mask_train, config.gamma)
            loss, grads = loss_and_gradient(
                params, [(t.obs, t.action, y) for t, y in zip(batch, targets)]
            )
            grads, _ = clip_gradients(grads, config.grad_clip)
            params = sgd_step(params, grads, config.alpha)
            learner_policy.set_params(params)
            losses.append(loss)
            learner_steps += 1
            if learner_steps % config.target_period == 0:
                target = params

        while not env.terminal():
            seat = env.current_seat()
            obs = env.observe(seat)
            legal = env.legal_actions()
            if seat == learner_seat:
                if pending is not None:
                    prev_obs, prev_action = pending
                    buffer.push(
                        Transition(
                            prev_obs, prev_action, accumulated.copy(), obs, False,
                            tuple(legal),
                        )
                    )
                    accumulated[:] = 0.0
                    learn_tick()
                action = learner_policy.act(obs, legal, rng)
                pending = (obs, action)
            else:
                action = seat_policies[seat].act(obs, legal, rng)
            rewards_by_seat, _ = env.step(action)
            steps += 1
            learner_reward = rewards_by_seat.get(learner_seat)
            if learner_reward is not None:
                accumulated += learner_reward
                episode_rewards += learner_reward

        if pending is not None:
            prev_obs, prev_action = pending
            final_obs = env.observe(learner_seat)
            # Cap-truncated episodes keep bootstrapping; true ends do not.
            terminal_flag = not getattr(env, "truncated", False)
            buffer.push(
                Transition(prev_obs, prev_action, accumulated.copy(), final_obs,
                           terminal_flag, None)
            )
            learn_tick()

        won = env.winner() == learner_seat if env.n_seats > 1 else False
        if league_hook is not None and env.n_seats > 1:
            league_hook.record_outcome(opponent_ids, won)
        entry = EpisodeMetrics(
            episode=episode,
            rewards=episode_rewards,
            win=won,
            loss=float(np.mean(losses)) if losses else float("nan"),
            epsilon=eps,
            steps=steps,
        )
        metrics.append(entry)
        if metrics_cb is not None:
            metrics_cb(entry)

    return TrainResult(params, tuple(metrics), learner_steps)


def greedy_policy_table(params: NetworkParams, mdp: TabularMDP, mask: StrategyMask) -> np.ndarray:
    """Greedy masked action per MDP state under the network (for comparisons)."""
    actions = np.zeros(mdp.n_states, dtype=np.int64)
    for s in range(mdp.n_states):
        static = np.zeros(mdp.n_states)
        static[s] = 1.0
        obs = Observation(static, np.zeros((0, 1)))
        actions[s] = masked_argmax(forward_values(params, obs), mask)
    return actions
