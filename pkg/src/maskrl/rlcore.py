"""Environment-agnostic machinery for decomposed values and strategy masks.

A decomposed state-action value assigns a K-vector to every action; a
strategy mask is a K-vector of weights. Action selection scalarizes the
decomposed values with a dot product against the mask and acts greedily
(or epsilon-greedily) on the result. Setting a mask weight to 0 suppresses
a value dimension, a negative weight punishes it, and an all-ones mask
reduces everything to plain reward decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StrategyMask",
    "VectorReward",
    "DecomposedQRow",
    "PolicyConfig",
    "scalarize",
    "masked_argmax",
    "masked_epsilon_greedy",
    "epsilon_greedy_probabilities",
]


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have at least one component")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class StrategyMask:
    """Per-dimension weights applied to decomposed values during action selection."""

    weights: np.ndarray
    dimension_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        weights = _as_vector(self.weights, "mask weights")
        labels = tuple(self.dimension_labels)
        if not labels:
            labels = tuple(f"dim{i}" for i in range(weights.size))
        if len(labels) != weights.size:
            raise ValueError(
                f"{len(labels)} labels for {weights.size} mask weights"
            )
        if len(set(labels)) != len(labels):
            raise ValueError("dimension labels must be unique")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dimension_labels", labels)

    @property
    def k(self) -> int:
        return self.weights.size

    def with_weight(self, label: str, weight: float) -> "StrategyMask":
        """Return a copy with one labeled dimension reweighted."""
        if label not in self.dimension_labels:
            raise ValueError(f"unknown dimension label {label!r}")
        weights = self.weights.copy()
        weights[self.dimension_labels.index(label)] = weight
        return StrategyMask(weights, self.dimension_labels)


@dataclass(frozen=True)
class VectorReward:
    """A K-dimensional immediate reward."""

    components: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "components", _as_vector(self.components, "reward components")
        )

    @property
    def k(self) -> int:
        return self.components.size


@dataclass(frozen=True)
class DecomposedQRow:
    """Decomposed action values for one state: an |A| x K matrix."""

    values: np.ndarray
    action_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise ValueError(f"expected a nonempty |A| x K matrix, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("decomposed values contain non-finite entries")
        labels = tuple(self.action_labels)
        if not labels:
            labels = tuple(f"action{i}" for i in range(values.shape[0]))
        if len(labels) != values.shape[0]:
            raise ValueError(f"{len(labels)} action labels for {values.shape[0]} actions")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "action_labels", labels)

    @property
    def n_actions(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PolicyConfig:
    """Exploration rate and RNG seed for an epsilon-greedy policy."""

    epsilon: float
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must fit in 64 unsigned bits")


def scalarize(row, mask: StrategyMask) -> float:
    """Dot product of a K-vector of decomposed values with the mask weights."""
    vec = np.asarray(row, dtype=np.float64)
    if vec.shape != mask.weights.shape:
        raise ValueError(
            f"length mismatch: row has {vec.shape[0] if vec.ndim == 1 else vec.shape} "
            f"components, mask has {mask.k}"
        )
    return float(vec @ mask.weights)


def _q_values(q) -> np.ndarray:
    return q.values if isinstance(q, DecomposedQRow) else np.asarray(q, dtype=np.float64)


def masked_argmax(q, mask: StrategyMask, legal=None) -> int:
    """Lowest-indexed action maximizing the masked scalarization Q(s, a) . m.

    `legal` optionally restricts the candidates to a subset of action indices
    (Coup states offer varying move sets); ties break toward the lowest index.
    """
    values = _q_values(q)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("empty action set")
    if values.shape[1] != mask.k:
        raise ValueError(f"length mismatch: Q has K={values.shape[1]}, mask has K={mask.k}")
    dots = values @ mask.weights
    if legal is None:
        return int(np.argmax(dots))
    candidates = sorted(int(a) for a in legal)
    if not candidates:
        raise ValueError("empty legal action set")
    if candidates[0] < 0 or candidates[-1] >= values.shape[0]:
        raise ValueError("legal action index out of range")
    return candidates[int(np.argmax(dots[candidates]))]


def epsilon_greedy_probabilities(q, mask: StrategyMask, epsilon: float, legal=None) -> np.ndarray:
    """Masked epsilon-greedy action probabilities over the full action space.

    The greedy action receives 1 - eps + eps/|L| and every other legal action
    eps/|L|, where L is the legal subset; illegal actions get probability 0.
    """
    values = _q_values(q)
    n_actions = values.shape[0]
    candidates = range(n_actions) if legal is None else sorted(int(a) for a in legal)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty legal action set")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    greedy = masked_argmax(values, mask, candidates)
    probs = np.zeros(n_actions, dtype=np.float64)
    probs[candidates] = epsilon / len(candidates)
    probs[greedy] += 1.0 - epsilon
    return probs


def masked_epsilon_greedy(q, mask: StrategyMask, cfg: PolicyConfig, legal=None, rng=None):
    """Sample an action from the masked epsilon-greedy policy.

    Returns (action index, probability vector). A persistent generator can be
    passed as `rng`; otherwise one is created from cfg.rng_seed, which makes a
    single call reproducible from the seed alone. RNG state is owned by the
    caller's policy instance, never shared.
    """
    probs = epsilon_greedy_probabilities(q, mask, cfg.epsilon, legal)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    # Cumulative inverse sampling keeps the draw independent of numpy's choice()
    # internals and exactly consistent with the returned probabilities.
    u = rng.random()
    action = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    action = min(action, probs.size - 1)
    return action, probs
