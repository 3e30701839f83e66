"""Two-state, two-action chain MDP with a known optimal policy.

State 0: action 0 stays (+1), action 1 moves to state 1 (0).
State 1: action 0 moves back to state 0 (0), action 1 stays (+2).
With ``slip`` > 0 the chosen action is replaced by the other one with that
probability.  Observations are the one-hot state; episodes only end by
truncation.
"""

from __future__ import annotations

import numpy as np

from ..featurespace import CATEGORICAL, FeatureSchema
from ..seeding import derive_rng
from .base import EnvContractError

# NEXT[s][a], REWARD[s][a]
NEXT = ((0, 1), (0, 1))
REWARD = ((1.0, 0.0), (0.0, 2.0))


def value_iteration(gamma: float, slip: float = 0.0, tol: float = 1e-12) -> np.ndarray:
    """Exact optimal Q-table (2 x 2) of the chain."""
    Q = np.zeros((2, 2))
    while True:
        V = Q.max(axis=1)
        new = np.zeros_like(Q)
        for s in range(2):
            for a in range(2):
                for b, pb in ((a, 1 - slip), (1 - a, slip)):
                    new[s, a] += pb * (REWARD[s][b] + gamma * V[NEXT[s][b]])
        if np.abs(new - Q).max() < tol:
            return new
        Q = new


class Chain:
    n_actions = 2

    def __init__(self, max_steps: int = 50, slip: float = 0.0):
        self.max_steps = max_steps
        self.slip = slip
        self.schema = FeatureSchema.from_specs([("s0", CATEGORICAL, "state"),
                                                ("s1", CATEGORICAL, "state")])
        self._done = True
        self.truncated = False

    def observe(self) -> np.ndarray:
        obs = np.zeros(2)
        obs[self.state] = 1.0
        return obs

    def reset(self, seed: int = 0) -> np.ndarray:
        self._rng = derive_rng(seed, "env")
        self.state = 0
        self.steps = 0
        self._done = False
        self.truncated = False
        return self.observe()

    def step(self, action: int):
        if self._done:
            raise EnvContractError("step() called on a finished episode; call reset()")
        a = int(action)
        if self.slip > 0 and self._rng.random() < self.slip:
            a = 1 - a
        r = REWARD[self.state][a]
        self.state = NEXT[self.state][a]
        self.steps += 1
        if self.steps >= self.max_steps:
            self._done = self.truncated = True
        return self.observe(), r, self._done
