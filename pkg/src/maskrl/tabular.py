"""Masked TD(0) learners on finite MDPs, plus the optimality oracle and the
empirical verifiers for the contraction and convergence guarantees.

Terminal states carry zero value by convention: the Bellman machinery zeroes
terminal source rows and episodes end on arrival, so the operator, the
value-iteration oracle, and the TD learners agree everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .rlcore import StrategyMask, masked_argmax

__all__ = [
    "TabularMDP",
    "QTable",
    "LearningSchedule",
    "robbins_monro_schedule",
    "random_mdp",
    "save_mdp",
    "load_mdp",
    "masked_sarsa_step",
    "masked_expected_sarsa_step",
    "masked_q_step",
    "bellman_operator_H",
    "value_iteration_oracle",
    "run_tabular_training",
    "TabularTrainingResult",
    "ContractionReport",
    "ConvergenceReport",
    "contraction_suite",
    "convergence_suite",
]

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class TabularMDP:
    """A finite MDP with K-dimensional rewards.

    transition[s, a, s'] is p(s'|s, a); reward[s, a, s'] is the K-vector
    r(s', a, s); terminal flags end episodes on arrival.
    """

    transition: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        p = np.asarray(self.transition, dtype=np.float64)
        r = np.asarray(self.reward, dtype=np.float64)
        t = np.asarray(self.terminal, dtype=bool)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition table must be (S, A, S), got {p.shape}")
        if r.shape[:3] != p.shape or r.ndim != 4:
            raise ValueError(f"reward table must be (S, A, S, K), got {r.shape}")
        if t.shape != (p.shape[0],):
            raise ValueError("terminal flags must have one entry per state")
        if (p < 0).any():
            raise ValueError("transition probabilities must be non-negative")
        sums = p.sum(axis=2)
        if not np.allclose(sums, 1.0, rtol=0.0, atol=_PROB_TOL):
            raise ValueError("each p(.|s,a) must sum to 1 within 1e-12")
        if not np.isfinite(r).all():
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "terminal", t)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_dims(self) -> int:
        return self.reward.shape[3]


@dataclass(frozen=True)
class QTable:
    """Decomposed state-action values: an (S, A, K) array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"QTable values must be (S, A, K), got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("QTable contains non-finite entries")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mdp: TabularMDP) -> "QTable":
        return cls(np.zeros((mdp.n_states, mdp.n_actions, mdp.n_dims)))

    def scalarized(self, mask: StrategyMask) -> np.ndarray:
        if mask.k != self.values.shape[2]:
            raise ValueError("mask dimension does not match QTable")
        return self.values @ mask.weights


@dataclass(frozen=True)
class LearningSchedule:
    """Step-size and exploration schedules for tabular training.

    alpha_fn maps (state, action, prior visit count) to a step size in (0, 1];
    epsilon_fn maps the episode index to the exploration rate.
    """

    alpha_fn: Callable[[int, int, int], float]
    epsilon_fn: Callable[[int], float]


def robbins_monro_schedule(
    alpha0: float = 1.0, rho: float = 0.7, epsilon: float = 0.1
) -> LearningSchedule:
    """alpha_t = alpha0 / (1 + visits)^rho with rho in (0.5, 1].

    This family satisfies sum alpha = inf and sum alpha^2 < inf per (s, a)
    by construction, which is what the convergence guarantee requires.
    """
    if not 0.5 < rho <= 1.0:
        raise ValueError(f"rho must be in (0.5, 1], got {rho}")
    if not 0.0 < alpha0 <= 1.0:
        raise ValueError(f"alpha0 must be in (0, 1], got {alpha0}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    return LearningSchedule(
        alpha_fn=lambda s, a, visits: alpha0 / (1.0 + visits) ** rho,
        epsilon_fn=lambda episode: epsilon,
    )


def random_mdp(
    n_states: int,
    n_actions: int,
    n_dims: int,
    gamma: float,
    rng: np.random.Generator,
    reward_scale: float = 1.0,
    terminal_fraction: float = 0.0,
) -> TabularMDP:
    """Draw a dense random MDP (Dirichlet transition rows, uniform rewards)."""
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions, n_states, n_dims))
    terminal = np.zeros(n_states, dtype=bool)
    n_terminal = int(round(terminal_fraction * n_states))
    if n_terminal:
        idx = rng.choice(n_states, size=n_terminal, replace=False)
        terminal[idx] = True
        if terminal.all():
            terminal[0] = False
    return TabularMDP(p, r, terminal, gamma)


# ---------------------------------------------------------------------------
# MDP corpus files
# ---------------------------------------------------------------------------
#
# Plain-text format, one record per line, '#' comments allowed:
#
#   mdp 1
#   states <S>
#   actions <A>
#   dims <K>
#   gamma <float>
#   terminal <s> [<s> ...]           (optional)
#   t <s> <a> <s'> <prob> <r_1> ... <r_K>
#
# Omitted (s, a, s') triples have probability 0. Each p(.|s,a) must sum to 1.

_MDP_FORMAT_VERSION = 1


def save_mdp(mdp: TabularMDP, path) -> None:
    lines = [f"mdp {_MDP_FORMAT_VERSION}"]
    lines.append(f"states {mdp.n_states}")
    lines.append(f"actions {mdp.n_actions}")
    lines.append(f"dims {mdp.n_dims}")
    lines.append(f"gamma {float(mdp.gamma)!r}")
    terminal = np.flatnonzero(mdp.terminal)
    if terminal.size:
        lines.append("terminal " + " ".join(str(int(s)) for s in terminal))
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            for s2 in range(mdp.n_states):
                prob = float(mdp.transition[s, a, s2])
                if prob == 0.0:
                    continue
                rew = " ".join(repr(float(x)) for x in mdp.reward[s, a, s2])
                lines.append(f"t {s} {a} {s2} {prob!r} {rew}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mdp(path) -> TabularMDP:
    header: dict[str, float] = {}
    terminal_states: list[int] = []
    triples: list[tuple[int, int, int, float, list[float]]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        try:
            if key == "mdp":
                if int(tok[1]) != _MDP_FORMAT_VERSION:
                    raise ValueError(f"unsupported mdp file version {tok[1]}")
            elif key in ("states", "actions", "dims"):
                header[key] = int(tok[1])
            elif key == "gamma":
                header[key] = float(tok[1])
            elif key == "terminal":
                terminal_states = [int(x) for x in tok[1:]]
            elif key == "t":
                s, a, s2 = int(tok[1]), int(tok[2]), int(tok[3])
                prob = float(tok[4])
                rew = [float(x) for x in tok[5:]]
                triples.append((s, a, s2, prob, rew))
            else:
                raise ValueError(f"unknown record {key!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    for key in ("states", "actions", "dims", "gamma"):
        if key not in header:
            raise ValueError(f"{path}: missing '{key}' header")
    n_s, n_a, k = int(header["states"]), int(header["actions"]), int(header["dims"])
    p = np.zeros((n_s, n_a, n_s))
    r = np.zeros((n_s, n_a, n_s, k))
    for s, a, s2, prob, rew in triples:
        if len(rew) != k:
            raise ValueError(f"{path}: transition ({s},{a},{s2}) has {len(rew)} reward dims, expected {k}")
        p[s, a, s2] = prob
        r[s, a, s2] = rew
    terminal = np.zeros(n_s, dtype=bool)
    terminal[terminal_states] = True
    return TabularMDP(p, r, terminal, float(header["gamma"]))


# ---------------------------------------------------------------------------
# Update rules
# ---------------------------------------------------------------------------


def _check_step_args(q: QTable, s: int, a: int, reward_vec, s_next: int, alpha: float):
    values = q.values
    n_s, n_a, k = values.shape
    if not (0 <= s < n_s and 0 <= s_next < n_s):
        raise IndexError(f"state index out of range: s={s}, s'={s_next}, S={n_s}")
    if not 0 <= a < n_a:
        raise IndexError(f"action index out of range: a={a}, A={n_a}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    r = np.asarray(reward_vec, dtype=np.float64)
    if r.shape != (k,):
        raise ValueError(f"reward vector must have K={k} components, got shape {r.shape}")
    return r


def masked_sarsa_step(
    q: QTable, s: int, a: int, reward_vec, s_next: int, a_next: int,
    alpha: float, gamma: float, terminal: bool = False,
) -> QTable:
    """Q(s,a) <- (1-a)Q(s,a) + a[r + g*Q(s',a')], zero bootstrap at terminal s'."""
    r = _check_step_args(q, s, a, reward_vec, s_next, alpha)
    values = q.values.copy()
    bootstrap = 0.0 if terminal else gamma * values[s_next, a_next]
    values[s, a] = (1.0 - alpha) * values[s, a] + alpha * (r + bootstrap)
    return QTable(values)


def masked_expected_sarsa_step(
    q: QTable, s: int, a: int, reward_vec, s_next: int, mask: StrategyMask,
    epsilon: float, alpha: float, gamma: float, terminal: bool = False,
) -> QTable:
    """Bootstrap with the masked epsilon-greedy expectation over next actions."""
    r = _check_step_args(q, s, a, reward_vec, s_next, alpha)
    values = q.values.copy()
    if terminal:
        bootstrap = 0.0
    else:
        next_row = values[s_next]
        greedy = masked_argmax(next_row, mask)
        expected = epsilon * next_row.mean(axis=0) + (1.0 - epsilon) * next_row[greedy]
        bootstrap = gamma * expected
    values[s, a] = (1.0 - alpha) * values[s, a] + alpha * (r + bootstrap)
    return QTable(values)


def masked_q_step(
    q: QTable, s: int, a: int, reward_vec, s_next: int, mask: StrategyMask,
    alpha: float, gamma: float, terminal: bool = False,
) -> QTable:
    """Bootstrap with the full K-vector at the masked-argmax next action."""
    r = _check_step_args(q, s, a, reward_vec, s_next, alpha)
    values = q.values.copy()
    if terminal:
        bootstrap = 0.0
    else:
        a_star = masked_argmax(values[s_next], mask)
        bootstrap = gamma * values[s_next, a_star]
    values[s, a] = (1.0 - alpha) * values[s, a] + alpha * (r + bootstrap)
    return QTable(values)


# ---------------------------------------------------------------------------
# Bellman machinery
# ---------------------------------------------------------------------------


def _masked_expected_reward(mdp: TabularMDP, mask: StrategyMask) -> np.ndarray:
    """Sum_s' p(s'|s,a) * (r(s',a,s) . m) as an (S, A) array."""
    r_dot_m = mdp.reward @ mask.weights
    return np.einsum("sax,sax->sa", mdp.transition, r_dot_m)


def _greedy_state_values(qm: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    v = qm.max(axis=1)
    v[terminal] = 0.0
    return v


def bellman_operator_H(q: QTable, mask: StrategyMask, mdp: TabularMDP) -> np.ndarray:
    """Apply the masked Bellman optimality operator, returning (HQ . m)(s, a).

    (HQ.m)(s,a) = sum_s' p(s'|s,a) [r.m + gamma * Q(s', a*_m(s')).m] with zero
    bootstrap at terminal s' and zero rows at terminal s.
    """
    if q.values.shape[:2] != (mdp.n_states, mdp.n_actions) or q.values.shape[2] != mask.k:
        raise ValueError("QTable shape does not match the MDP and mask")
    if mdp.n_dims != mask.k:
        raise ValueError("mask dimension does not match the MDP reward")
    qm = q.scalarized(mask)
    v_next = _greedy_state_values(qm, mdp.terminal)
    out = _masked_expected_reward(mdp, mask) + mdp.gamma * (mdp.transition @ v_next)
    out[mdp.terminal, :] = 0.0
    return out


def value_iteration_oracle(
    mdp: TabularMDP, mask: StrategyMask, tol: float = 1e-10, max_iter: int = 1_000_000
) -> np.ndarray:
    """Fixed point of the scalar Bellman optimality operator on r . m.

    Iterates until the sup-norm change drops below tol; the iteration cap is a
    safety net that cannot bind for gamma < 1 with a sane tol.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    r_m = _masked_expected_reward(mdp, mask)
    r_m[mdp.terminal, :] = 0.0
    qm = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        v = _greedy_state_values(qm, mdp.terminal)
        new = r_m + mdp.gamma * (mdp.transition @ v)
        new[mdp.terminal, :] = 0.0
        if np.max(np.abs(new - qm)) < tol:
            return new
        qm = new
    raise RuntimeError(f"value iteration did not converge within {max_iter} iterations")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularTrainingResult:
    q_table: QTable
    q_star: np.ndarray
    trace: tuple[tuple[int, float], ...]  # (total steps, ||Q.m - Q*_m||_inf)
    total_steps: int

    @property
    def final_distance(self) -> float:
        return self.trace[-1][1]


_ALGOS = ("sarsa", "expected_sarsa", "q")


def run_tabular_training(
    mdp: TabularMDP,
    algo: str,
    mask: StrategyMask,
    schedule: LearningSchedule,
    episodes: int,
    seed: int,
    max_steps_per_episode: int = 100,
    max_total_steps: int | None = None,
    checkpoint_every: int = 10_000,
    stop_distance: float | None = None,
    oracle_tol: float = 1e-10,
) -> TabularTrainingResult:
    """Run one masked TD(0) learner and trace its sup-norm distance to Q*_m.

    The trace is checkpointed every `checkpoint_every` steps; training stops
    early once the distance falls below `stop_distance` (if given) or when
    `max_total_steps` is exhausted. Same seed, same trace.
    """
    if algo not in _ALGOS:
        raise ValueError(f"algo must be one of {_ALGOS}, got {algo!r}")
    if mdp.n_dims != mask.k:
        raise ValueError("mask dimension does not match the MDP reward")
    rng = np.random.default_rng(seed)
    n_s, n_a, k = mdp.n_states, mdp.n_actions, mdp.n_dims
    q_star = value_iteration_oracle(mdp, mask, tol=oracle_tol)
    values = np.zeros((n_s, n_a, k))
    qm = np.zeros((n_s, n_a))
    visits = np.zeros((n_s, n_a), dtype=np.int64)
    w = mask.weights
    cum_p = np.cumsum(mdp.transition, axis=2)
    start_states = np.flatnonzero(~mdp.terminal)
    if start_states.size == 0:
        raise ValueError("MDP has no non-terminal start states")
    terminal = mdp.terminal
    reward = mdp.reward
    gamma = mdp.gamma
    alpha_fn, epsilon_fn = schedule.alpha_fn, schedule.epsilon_fn

    trace: list[tuple[int, float]] = []
    total_steps = 0
    stop = False

    def distance() -> float:
        return float(np.max(np.abs(qm - q_star)))

    def checkpoint() -> None:
        trace.append((total_steps, distance()))

    for episode in range(episodes):
        if stop:
            break
        eps = epsilon_fn(episode)
        s = int(start_states[rng.integers(start_states.size)])
        a = None
        if algo == "sarsa":
            a = _eps_greedy(qm[s], eps, rng)
        for _ in range(max_steps_per_episode):
            if algo != "sarsa":
                a = _eps_greedy(qm[s], eps, rng)
            s2 = int(np.searchsorted(cum_p[s, a], rng.random(), side="right"))
            s2 = min(s2, n_s - 1)
            r = reward[s, a, s2]
            done = bool(terminal[s2])
            alpha = alpha_fn(s, a, int(visits[s, a]))
            visits[s, a] += 1
            if done:
                target = r
                a2 = None
            elif algo == "q":
                a_star = int(np.argmax(qm[s2]))
                target = r + gamma * values[s2, a_star]
                a2 = None
            elif algo == "expected_sarsa":
                greedy = int(np.argmax(qm[s2]))
                expected = eps * values[s2].mean(axis=0) + (1.0 - eps) * values[s2, greedy]
                target = r + gamma * expected
                a2 = None
            else:  # sarsa
                a2 = _eps_greedy(qm[s2], eps, rng)
                target = r + gamma * values[s2, a2]
            values[s, a] += alpha * (target - values[s, a])
            qm[s, a] = values[s, a] @ w
            total_steps += 1
            if total_steps % checkpoint_every == 0:
                checkpoint()
                if stop_distance is not None and trace[-1][1] < stop_distance:
                    stop = True
                    break
            if max_total_steps is not None and total_steps >= max_total_steps:
                stop = True
                break
            if done:
                break
            s = s2
            if algo == "sarsa":
                a = a2

    if not trace or trace[-1][0] != total_steps:
        checkpoint()
    return TabularTrainingResult(QTable(values), q_star, tuple(trace), total_steps)


def _eps_greedy(qm_row: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(qm_row.size))
    return int(np.argmax(qm_row))


# ---------------------------------------------------------------------------
# Theory verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionReport:
    """Worst observed slack of the sup-norm contraction inequality on one MDP."""

    mdp_index: int
    n_states: int
    n_actions: int
    n_dims: int
    gamma: float
    n_pairs: int
    max_violation: float  # max over pairs of ||HQ1.m - HQ2.m||inf - gamma*||Q1.m - Q2.m||inf
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


@dataclass(frozen=True)
class ConvergenceReport:
    """Final oracle distance of masked Q-learning on one MDP."""

    mdp_index: int
    n_states: int
    n_actions: int
    n_dims: int
    gamma: float
    steps: int
    final_distance: float
    target: float

    @property
    def passed(self) -> bool:
        return self.final_distance < self.target


def contraction_suite(
    n_mdps: int = 20,
    n_pairs: int = 1000,
    seed: int = 0,
    gammas: Sequence[float] = (0.5, 0.9, 0.99),
    max_states: int = 8,
    max_actions: int = 4,
    max_dims: int = 4,
    tolerance: float = 1e-12,
) -> list[ContractionReport]:
    """Check ||HQ1.m - HQ2.m||inf <= gamma ||Q1.m - Q2.m||inf on random triples."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n_mdps):
        n_s = int(rng.integers(2, max_states + 1))
        n_a = int(rng.integers(2, max_actions + 1))
        k = int(rng.integers(1, max_dims + 1))
        gamma = float(gammas[i % len(gammas)])
        mdp = random_mdp(n_s, n_a, k, gamma, rng)
        worst = -np.inf
        for _ in range(n_pairs):
            mask = StrategyMask(rng.uniform(-2.0, 2.0, size=k))
            q1 = QTable(rng.uniform(-5.0, 5.0, size=(n_s, n_a, k)))
            q2 = QTable(rng.uniform(-5.0, 5.0, size=(n_s, n_a, k)))
            lhs = np.max(np.abs(bellman_operator_H(q1, mask, mdp) - bellman_operator_H(q2, mask, mdp)))
            rhs = gamma * np.max(np.abs(q1.scalarized(mask) - q2.scalarized(mask)))
            worst = max(worst, float(lhs - rhs))
        reports.append(
            ContractionReport(i, n_s, n_a, k, gamma, n_pairs, worst, tolerance)
        )
    return reports


def convergence_suite(
    n_mdps: int = 5,
    max_steps: int = 2_000_000,
    target: float = 1e-2,
    seed: int = 0,
    gammas: Sequence[float] = (0.5, 0.8, 0.9),
    reward_scale: float = 0.25,
    alpha0: float = 0.5,
    rho: float = 0.6,
) -> list[ConvergenceReport]:
    """Train masked Q-learning on random MDPs and measure the final oracle gap.

    Uniform behavior (epsilon = 1) is used: Q-learning is off-policy, and full
    exploration gives every (s, a) the visit counts the step-size schedule
    needs inside the step budget.
    """
    rng = np.random.default_rng(seed)
    schedule = robbins_monro_schedule(alpha0=alpha0, rho=rho, epsilon=1.0)
    reports = []
    for i in range(n_mdps):
        n_s = int(rng.integers(3, 9))
        n_a = int(rng.integers(2, 5))
        k = int(rng.integers(2, 5))
        gamma = float(gammas[i % len(gammas)])
        mdp = random_mdp(n_s, n_a, k, gamma, rng, reward_scale=reward_scale)
        weights = rng.uniform(-1.0, 1.0, size=k)
        weights[int(rng.integers(k))] = 0.0  # keep a masked-out dimension in play
        mask = StrategyMask(weights)
        episodes = max_steps // 100 + 1
        result = run_tabular_training(
            mdp,
            "q",
            mask,
            schedule,
            episodes=episodes,
            seed=int(rng.integers(2**32)),
            max_steps_per_episode=100,
            max_total_steps=max_steps,
            checkpoint_every=20_000,
            stop_distance=0.8 * target,
        )
        reports.append(
            ConvergenceReport(
                i, n_s, n_a, k, gamma, result.total_steps, result.final_distance, target
            )
        )
    return reports
