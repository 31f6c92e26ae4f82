"""Reward decomposition and strategy masking for value-based RL agents.

Subpackages and modules:

- rlcore: masks, decomposed values, masked policies.
- tabular: finite-MDP TD(0) learners, the optimality oracle, theory verifiers.
- nnapprox: the from-scratch recurrent Q-network with exact gradients.
- maskdqn: replay, masked bootstrap targets, the DQN training loop.
- coupenv: the Coup rules engine, rewards, encodings, and game logs.
- league: PFSP opponent sampling and league-play training.
- expcli: the experiment CLI (training, evaluation, counterfactuals, sweeps).
"""

from . import coupenv, league, maskdqn, nnapprox, rlcore, tabular

__version__ = "0.1.0"

__all__ = [
    "coupenv",
    "league",
    "maskdqn",
    "nnapprox",
    "rlcore",
    "tabular",
    "__version__",
]
