"""Environment contract, traces and experience sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..featurespace import FeatureSchema
from ..seeding import derive_rng, episode_seeds


class EnvContractError(RuntimeError):
    """Raised on misuse of the reset/step protocol (e.g. stepping a finished episode)."""


class Env(Protocol):
    n_actions: int
    schema: FeatureSchema
    max_steps: int

    def reset(self, seed: int) -> np.ndarray: ...

    def step(self, action: int) -> tuple[np.ndarray, float, bool]: ...


@dataclass
class Trace:
    states: list  # s_0 .. s_n
    actions: list  # a_0 .. a_{n-1}
    rewards: list  # r_1 .. r_n

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class Experience:
    """Multiset of visited (state, chosen action, Q-vector) tuples."""

    states: np.ndarray
    actions: np.ndarray
    qvalues: np.ndarray
    episode: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.episode is None:
            self.episode = np.zeros(len(self.actions), dtype=np.int32)

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx) -> "Experience":
        return Experience(self.states[idx], self.actions[idx], self.qvalues[idx], self.episode[idx])

    def save(self, path) -> None:
        np.savez_compressed(path, states=self.states, actions=self.actions,
                            qvalues=self.qvalues, episode=self.episode)

    @classmethod
    def load(cls, path) -> "Experience":
        with np.load(path) as z:
            return cls(z["states"], z["actions"], z["qvalues"], z["episode"])

    @classmethod
    def empty(cls, n_features: int, n_actions: int) -> "Experience":
        return cls(np.zeros((0, n_features)), np.zeros(0, dtype=np.int64),
                   np.zeros((0, n_actions)), np.zeros(0, dtype=np.int32))


def run_episode(env: Env, choose, seed: int, record: bool = True):
    """Roll out one episode; ``choose(obs, rng)`` picks the action.

    Returns ``(trace, total_reward)``; ``trace`` is ``None`` when not recording.
    """
    rng = derive_rng(seed, "policy")
    obs = env.reset(seed)
    states, actions, rewards = [obs], [], []
    total = 0.0
    done = False
    while not done:
        a = choose(obs, rng)
        obs, r, done = env.step(a)
        total += r
        if record:
            states.append(obs)
            actions.append(a)
            rewards.append(r)
    return (Trace(states, actions, rewards) if record else None), total


def sample_traces(env: Env, q, n_episodes: int, seed: int, epsilon: float = 0.0):
    """Run the greedy policy of ``q`` (epsilon-greedy if ``epsilon > 0``).

    Returns the traces and the experience multiset holding every visited
    non-terminal state with the chosen action and its Q-vector.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    traces, S, A, Qs, ep = [], [], [], [], []
    for i, s in enumerate(episode_seeds(seed, n_episodes, "sample")):
        def choose(obs, rng):
            qv = q.q_values(obs)
            if epsilon > 0 and rng.random() < epsilon:
                a = int(rng.integers(env.n_actions))
            else:
                a = int(np.argmax(qv))
            S.append(obs)
            A.append(a)
            Qs.append(qv)
            ep.append(i)
            return a
        trace, _ = run_episode(env, choose, s)
        traces.append(trace)
    if not A:
        return traces, Experience.empty(len(env.schema), env.n_actions)
    return traces, Experience(np.array(S), np.array(A, dtype=np.int64),
                              np.array(Qs, dtype=float), np.array(ep, dtype=np.int32))
