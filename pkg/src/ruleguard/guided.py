"""Rule-guided policy evaluation.

At every step the guide reports which actions are enforced (positive flags)
and which are blocked (negative flags).  If exactly one action is enforced
and it is not also blocked, it is taken.  Otherwise blocked actions get
Q = -inf and the greedy action of the rest is taken; if everything is
blocked, a uniformly random action is drawn from the episode's policy stream.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .envs.base import run_episode
from .featurespace import DiscretizationScheme
from .rules import Rule, RuleIndex
from .seeding import episode_seeds

GREEDY, ENFORCE, MASKED, FALLBACK = "greedy", "enforce", "masked", "fallback"


@dataclass
class StepEvent:
    episode: int
    step: int
    kind: str  # GREEDY / ENFORCE / MASKED / FALLBACK
    action: int
    enforced: tuple[int, ...]
    blocked: tuple[int, ...]


@dataclass
class EvalResult:
    mean: float
    stderr: float
    n: int
    rewards: list[float]
    enforced: int = 0  # steps on which a positive rule was enforced
    blocked: int = 0  # steps on which at least one action was masked
    fallback: int = 0  # steps on which every action was masked
    seed: int | None = None
    events: list[StepEvent] | None = field(default=None, repr=False)

    @property
    def std(self) -> float:
        return float(np.std(self.rewards, ddof=1)) if self.n > 1 else 0.0

    @classmethod
    def from_rewards(cls, rewards, **counts) -> "EvalResult":
        r = [float(x) for x in rewards]
        if not r:
            raise ValueError("need at least one episode")
        n = len(r)
        se = float(np.std(r, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(r)), se, n, r, **counts)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("events")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def rewards_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["episode", "reward"])
        for i, r in enumerate(self.rewards):
            wr.writerow([i, repr(r)])
        return buf.getvalue()


class RuleGuide:
    """Guide backed by a rule set; flags come from the rules triggering in the
    discretized state."""

    def __init__(self, rules, scheme: DiscretizationScheme, n_actions: int):
        self.rules = list(rules)
        self.scheme = scheme
        self.n_actions = n_actions
        self.index = RuleIndex(self.rules, len(scheme))
        if len(self.index) and self.index.actions.max() >= n_actions:
            raise ValueError(f"rule head {int(self.index.actions.max())} outside the {n_actions} actions")

    def flags(self, obs) -> tuple[np.ndarray, np.ndarray]:
        A = self.n_actions
        if not self.rules:
            return np.zeros(A, bool), np.zeros(A, bool)
        trig = self.index.triggered(self.scheme.discretize(obs))
        pos = np.bincount(self.index.actions[trig & self.index.positive], minlength=A) > 0
        neg = np.bincount(self.index.actions[trig & ~self.index.positive], minlength=A) > 0
        return pos, neg


def guided_choice(qv, pos, neg, rng: np.random.Generator, epsilon: float = 0.0) -> tuple[int, str]:
    """Action selection of one guided step; returns ``(action, kind)``."""
    enforced = np.flatnonzero(pos)
    if len(enforced) == 1 and not neg[enforced[0]]:
        return int(enforced[0]), ENFORCE
    if neg.all():
        return int(rng.integers(len(qv))), FALLBACK
    allowed = ~neg
    if epsilon > 0 and rng.random() < epsilon:
        choices = np.flatnonzero(allowed)
        return int(choices[rng.integers(len(choices))]), (MASKED if neg.any() else GREEDY)
    q = np.where(allowed, np.asarray(qv, float), -np.inf)
    return int(np.argmax(q)), (MASKED if neg.any() else GREEDY)


def _episode(args):
    q, guide, env, ep, seed, epsilon, record = args
    counts = {ENFORCE: 0, MASKED: 0, FALLBACK: 0}
    events = [] if record else None
    step = [0]

    def choose(obs, rng):
        qv = q.q_values(obs)
        if guide is None:
            if epsilon > 0 and rng.random() < epsilon:
                a, kind = int(rng.integers(len(qv))), GREEDY
            else:
                a, kind = int(np.argmax(qv)), GREEDY
            pos = neg = np.zeros(len(qv), bool)
        else:
            pos, neg = guide.flags(obs)
            a, kind = guided_choice(qv, pos, neg, rng, epsilon)
            if kind != GREEDY:
                counts[kind] += 1
            if kind == FALLBACK:
                counts[MASKED] += 1
        if record:
            events.append(StepEvent(ep, step[0], kind, a, tuple(np.flatnonzero(pos).tolist()),
                                    tuple(np.flatnonzero(neg).tolist())))
        step[0] += 1
        return a

    _, total = run_episode(env, choose, seed, record=False)
    return total, counts, events


def evaluate_with_guide(q, guide, n: int, env, seed: int, epsilon: float = 0.0,
                        record_events: bool = False, workers: int = 1) -> EvalResult:
    """Run ``n`` episodes; episode ``i`` uses the ``i``-th seed of the
    evaluation stream of ``seed`` whatever the guide, so guided and unguided
    runs share their environment randomness."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seeds = episode_seeds(seed, n, "eval")
    jobs = [(q, guide, env, i, s, epsilon, record_events) for i, s in enumerate(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_episode, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        out = [_episode(j) for j in jobs]
    rewards = [o[0] for o in out]
    res = EvalResult.from_rewards(rewards,
                                  enforced=sum(o[1][ENFORCE] for o in out),
                                  blocked=sum(o[1][MASKED] for o in out),
                                  fallback=sum(o[1][FALLBACK] for o in out),
                                  seed=seed)
    if record_events:
        res.events = [e for o in out for e in o[2]]
    return res


def evaluate_guided(q, rules: list[Rule], n: int, env, scheme: DiscretizationScheme, seed: int,
                    epsilon: float = 0.0, record_events: bool = False, workers: int = 1) -> EvalResult:
    guide = RuleGuide(rules, scheme, env.n_actions)
    return evaluate_with_guide(q, guide, n, env, seed, epsilon, record_events, workers)


def evaluate_unguided(q, n: int, env, seed: int, workers: int = 1) -> EvalResult:
    return evaluate_with_guide(q, None, n, env, seed, workers=workers)
