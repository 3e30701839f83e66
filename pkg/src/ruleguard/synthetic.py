"""Hand-written Q-functions over the grid observation with known ground truth.

``wall_avoidance_q`` prefers the direction towards the closest pellet and
scores moves into a wall far below everything else, so the minimal-Q action
in a state with a wall to the north is north, and the policy never walks
into a wall.
"""

from __future__ import annotations

import numpy as np

from .agent import FunctionQ
from .envs.base import sample_traces
from .envs.gridpellets import GridPellets

WALL_PENALTY = 10.0
FOOD_BONUS = 2.0


def wall_avoidance_values(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    can_move = X[:, 62:66]
    food_dir = X[:, 9:13]
    Q = np.empty((len(X), 5))
    Q[:, :4] = FOOD_BONUS * food_dir - WALL_PENALTY * (1.0 - can_move)
    Q[:, 4] = -1.0
    return Q


def wall_avoidance_q() -> FunctionQ:
    return FunctionQ(wall_avoidance_values, 5)


def wall_avoidance_experience(n_episodes: int = 20, seed: int = 0, layout: str = "small"):
    """Traces and experiences of the wall-avoidance policy on a grid layout."""
    env = GridPellets(layout=layout)
    q = wall_avoidance_q()
    traces, E = sample_traces(env, q, n_episodes, seed)
    return env, q, traces, E


def east_blind_values(X) -> np.ndarray:
    """East-leaning wall avoidance that ignores the east wall flag: a planted
    weakness that the rotated north-wall rule repairs."""
    Q = wall_avoidance_values(X)
    Q[:, 2] = FOOD_BONUS + 1.0
    return Q


def east_blind_q() -> FunctionQ:
    return FunctionQ(east_blind_values, 5)
