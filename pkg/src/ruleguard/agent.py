"""Linear / tile-coded semi-gradient Q-learning.

The rest of the package only needs a queryable Q-function: anything with
``n_actions`` and ``q_values(states)`` (1-D state -> vector, 2-D batch ->
matrix) can stand in for :class:`QFunction`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .seeding import derive_rng, derive_seed

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Basis:
    """Feature basis.  ``kind`` is ``"linear"`` (raw features, optional bias)
    or ``"tiles"`` (``count`` offset tilings of ``resolution`` bins per feature,
    for features scaled to [0, 1])."""

    kind: str = "linear"
    bias: bool = True
    count: int = 4
    resolution: int = 8

    def __post_init__(self):
        if self.kind not in ("linear", "tiles"):
            raise ValueError(f"unknown basis {self.kind!r}")

    def size(self, n_features: int) -> int:
        if self.kind == "linear":
            return n_features + int(self.bias)
        return n_features * self.count * (self.resolution + 1) + int(self.bias)


@dataclass(frozen=True)
class Handicap:
    """Action mask used only during training.

    ``action`` is unavailable whenever ``feature`` is ``None`` or
    ``low <= state[feature] < high``.
    """

    action: int
    feature: int | None = None
    low: float = -np.inf
    high: float = np.inf

    def masked(self, state) -> bool:
        if self.feature is None:
            return True
        return self.low <= state[self.feature] < self.high


@dataclass
class TrainConfig:
    steps: int = 100_000
    learning_rate: float = 0.01
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    seed: int = 0
    basis: Basis = field(default_factory=Basis)
    handicap: Handicap | None = None
    log_every: int = 0  # episodes; 0 disables progress logging

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        for e in (self.eps_start, self.eps_end):
            if not 0.0 <= e <= 1.0:
                raise ValueError("epsilon must be in [0, 1]")
        if self.steps < 0 or self.learning_rate <= 0:
            raise ValueError("steps must be >= 0 and learning_rate > 0")
        if isinstance(self.basis, dict):
            self.basis = Basis(**self.basis)
        if isinstance(self.handicap, dict):
            self.handicap = Handicap(**self.handicap)

    def epsilon(self, t: int) -> float:
        horizon = max(1.0, self.eps_fraction * self.steps)
        frac = min(1.0, t / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


class QFunction:
    """Per-action weight vectors over a fixed feature basis."""

    def __init__(self, n_features: int, n_actions: int, basis: Basis = Basis(),
                 gamma: float = 0.95, weights=None, meta: dict | None = None):
        self.n_features = n_features
        self.n_actions = n_actions
        self.basis = basis
        self.gamma = gamma
        dim = basis.size(n_features)
        self.weights = np.zeros((n_actions, dim)) if weights is None else np.asarray(weights, float)
        if self.weights.shape != (n_actions, dim):
            raise ValueError(f"weights shape {self.weights.shape} != {(n_actions, dim)}")
        self.meta = dict(meta or {})
        if basis.kind == "tiles":
            width = basis.resolution + 1
            offs = np.arange(basis.count) / (basis.count * basis.resolution)
            self._offsets = offs
            self._tile_base = (np.arange(n_features)[:, None] * basis.count
                               + np.arange(basis.count)[None, :]) * width

    # -- basis ------------------------------------------------------------
    def _check(self, X: np.ndarray) -> None:
        if X.shape[-1] != self.n_features:
            raise ValueError(f"state arity {X.shape[-1]} != {self.n_features}")

    def active_tiles(self, state) -> np.ndarray:
        b = self.basis
        x = np.clip(np.asarray(state, float), 0.0, 1.0)
        idx = np.floor((x[:, None] + self._offsets[None, :]) * b.resolution).astype(np.int64)
        return (self._tile_base + idx).ravel()

    def features(self, state) -> np.ndarray:
        """Dense basis vector of one state."""
        x = np.asarray(state, float)
        self._check(x)
        if self.basis.kind == "linear":
            return np.append(x, 1.0) if self.basis.bias else x.copy()
        phi = np.zeros(self.weights.shape[1])
        phi[self.active_tiles(x)] = 1.0
        if self.basis.bias:
            phi[-1] = 1.0
        return phi

    # -- queries ----------------------------------------------------------
    def q_values(self, states) -> np.ndarray:
        X = np.asarray(states, float)
        self._check(X)
        W = self.weights
        if self.basis.kind == "linear":
            out = X @ W[:, : self.n_features].T
            if self.basis.bias:
                out = out + W[:, -1]
            return out
        if X.ndim == 1:
            q = W[:, self.active_tiles(X)].sum(axis=1)
            return q + W[:, -1] if self.basis.bias else q
        return np.stack([self.q_values(x) for x in X])

    def greedy_action(self, state) -> int:
        return int(np.argmax(self.q_values(state)))

    def argmin_action(self, state) -> int:
        return int(np.argmin(self.q_values(state)))

    __call__ = q_values

    # -- persistence --------------------------------------------------------
    def to_dict(self, schema_hash: str | None = None) -> dict:
        return {
            "format": "ruleguard.qfunction",
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_actions": self.n_actions,
            "basis": asdict(self.basis),
            "gamma": self.gamma,
            "schema_hash": schema_hash,
            "meta": self.meta,
            "weights": self.weights.tolist(),
        }

    def dumps(self, schema_hash: str | None = None) -> str:
        return json.dumps(self.to_dict(schema_hash))

    @classmethod
    def from_dict(cls, d: dict, schema_hash: str | None = None) -> "QFunction":
        if d.get("format") != "ruleguard.qfunction" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a ruleguard Q-function dump of a supported version")
        if schema_hash is not None and d.get("schema_hash") not in (None, schema_hash):
            raise ValueError("Q-function was trained on a different feature schema")
        return cls(d["n_features"], d["n_actions"], Basis(**d["basis"]), d["gamma"],
                   d["weights"], d.get("meta"))

    @classmethod
    def loads(cls, text: str, schema_hash: str | None = None) -> "QFunction":
        return cls.from_dict(json.loads(text), schema_hash)


class FunctionQ:
    """Adapter turning ``fn(states_2d) -> (m, n_actions)`` into a Q-function."""

    def __init__(self, fn, n_actions: int):
        self.fn = fn
        self.n_actions = n_actions

    def q_values(self, states) -> np.ndarray:
        X = np.asarray(states, float)
        if X.ndim == 1:
            return np.asarray(self.fn(X[None, :]), float)[0]
        return np.asarray(self.fn(X), float)

    def greedy_action(self, state) -> int:
        return int(np.argmax(self.q_values(state)))

    def argmin_action(self, state) -> int:
        return int(np.argmin(self.q_values(state)))

    __call__ = q_values


def greedy_policy(q):
    return lambda obs, rng: int(np.argmax(q.q_values(obs)))


def random_policy(n_actions: int):
    return lambda obs, rng: int(rng.integers(n_actions))


def train_q(env, config: TrainConfig, q: QFunction | None = None) -> QFunction:
    """Semi-gradient Q-learning with an epsilon-greedy behaviour policy.

    Returns a new QFunction; ``meta`` records the per-episode returns and the
    mean absolute TD error per 1000-step window.
    """
    n, A = len(env.schema), env.n_actions
    if q is None:
        q = QFunction(n, A, config.basis, config.gamma)
    else:
        q = QFunction(n, A, q.basis, config.gamma, q.weights.copy(), q.meta)
    rng = derive_rng(config.seed, "explore")
    W = q.weights
    lr = config.learning_rate
    if q.basis.kind == "tiles":
        lr = lr / (n * q.basis.count)
    handicap = config.handicap
    returns, td_windows = [], []
    td_acc, td_n = 0.0, 0
    episode = 0
    t = 0
    obs = env.reset(derive_seed(config.seed, "train", episode))
    phi = q.features(obs)
    ep_ret = 0.0
    while t < config.steps:
        allowed = np.ones(A, dtype=bool)
        if handicap is not None and handicap.masked(obs):
            allowed[handicap.action] = False
        qs = W @ phi
        if rng.random() < config.epsilon(t):
            choices = np.flatnonzero(allowed)
            a = int(choices[rng.integers(len(choices))])
        else:
            a = int(np.argmax(np.where(allowed, qs, -np.inf)))
        nxt, r, done = env.step(a)
        ep_ret += r
        target = r
        phi_next = q.features(nxt)
        if not done or getattr(env, "truncated", False):
            qn = W @ phi_next
            if handicap is not None and handicap.masked(nxt):
                qn[handicap.action] = -np.inf
            target += config.gamma * qn.max()
        delta = target - qs[a]
        W[a] += lr * delta * phi
        td_acc += abs(delta)
        td_n += 1
        t += 1
        if t % 1000 == 0:
            td_windows.append(td_acc / td_n)
            td_acc, td_n = 0.0, 0
        if t % 1000 == 0 or abs(delta) > 1e9:
            norm = float(np.linalg.norm(W))
            if not np.isfinite(norm) or norm > 1e9:
                raise TrainingDiverged(
                    f"weight norm {norm:.3g} after {t} steps (lr={config.learning_rate}, "
                    f"gamma={config.gamma}); lower the learning rate")
        if done:
            returns.append(ep_ret)
            episode += 1
            if config.log_every and episode % config.log_every == 0:
                log.info("episode %d step %d mean return (last %d) %.1f", episode, t,
                         config.log_every, float(np.mean(returns[-config.log_every:])))
            obs = env.reset(derive_seed(config.seed, "train", episode))
            phi = q.features(obs)
            ep_ret = 0.0
        else:
            obs, phi = nxt, phi_next
    q.meta = {"steps": config.steps, "seed": config.seed, "episodes": episode,
              "returns": returns, "td_error": td_windows}
    return q
