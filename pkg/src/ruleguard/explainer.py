"""LIME-style local surrogate explanations of a Q-policy's action choices.

Around an anchor state we draw perturbed samples (Gaussian noise on numeric
features, empirical resampling for categorical ones), label them with the
greedy action, and fit a kernel-weighted ridge regression per action on the
binary "same interval as the anchor" representation.  Positive weights push
toward choosing the action, negative weights away from it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .featurespace import CATEGORICAL, DiscretizationScheme
from .seeding import derive_rng, derive_seed

POS, NEG = "+", "-"


@dataclass
class Explanation:
    anchor: np.ndarray
    weights: np.ndarray  # (n_actions, n_features)
    score: float
    degenerate: bool = False

    def as_lists(self, top: int | None = None) -> list[list[tuple[int, float]]]:
        """Per action, ``(feature, weight)`` pairs ordered by decreasing |weight|."""
        out = []
        for row in self.weights:
            order = np.argsort(-np.abs(row), kind="stable")[:top]
            out.append([(int(i), float(row[i])) for i in order])
        return out


class PerturbationModel:
    """Sampling statistics taken from background (training) states."""

    def __init__(self, background, scheme: DiscretizationScheme):
        X = np.asarray(background, float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("background must be a non-empty 2-D array of states")
        if X.shape[1] != len(scheme):
            raise ValueError("background arity does not match the scheme")
        self.background = X
        self.scheme = scheme
        schema = scheme.schema
        self.numeric = np.array([f.kind != CATEGORICAL for f in schema.features])
        self.std = X.std(axis=0)
        groups = schema.groups()
        grouped = {i for idx in groups.values() for i in idx}
        # categorical columns resampled jointly per one-hot group
        self.blocks = [np.array(idx) for idx in groups.values()]
        self.blocks += [np.array([f.index]) for f in schema.features
                        if f.kind == CATEGORICAL and f.index not in grouped]

    def sample(self, anchor, n: int, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(anchor, float)
        S = np.tile(x, (n, 1))
        num = np.flatnonzero(self.numeric)
        S[:, num] += rng.standard_normal((n, len(num))) * self.std[num]
        m = len(self.background)
        for block in self.blocks:
            rows = rng.integers(m, size=n)
            S[:, block] = self.background[rows[:, None], block[None, :]]
        S[0] = x
        return S


def _weighted_ridge(Z, Y, w, alpha=1.0):
    """Ridge with an unpenalized intercept; returns (coef (k, n), weighted R^2)."""
    sw = w / w.sum()
    zm = sw @ Z
    ym = sw @ Y
    Zc, Yc = Z - zm, Y - ym
    Zw = Zc * w[:, None]
    coef = np.linalg.solve(Zw.T @ Zc + alpha * np.eye(Z.shape[1]), Zw.T @ Yc)
    resid = Yc - Zc @ coef
    ss_res = (w[:, None] * resid**2).sum(axis=0)
    ss_tot = (w[:, None] * Yc**2).sum(axis=0)
    r2 = np.where(ss_tot > 0, 1 - ss_res / np.where(ss_tot > 0, ss_tot, 1), 0.0)
    return coef.T, float(r2.mean())


def explain_instance(q, state, scheme: DiscretizationScheme, n_samples: int = 500, seed: int = 0,
                     *, background=None, model: PerturbationModel | None = None,
                     kernel_width: float | None = None) -> Explanation:
    """Explain the greedy action choice of ``q`` at ``state``.

    Sampling statistics come from ``model`` or, if not given, from the
    ``background`` states.
    """
    if n_samples < 50:
        raise ValueError("n_samples must be at least 50")
    if model is None:
        if background is None:
            raise ValueError("either background states or a PerturbationModel is required")
        model = PerturbationModel(background, scheme)
    rng = derive_rng(seed, "lime")
    x = np.asarray(state, float)
    n = len(scheme)
    S = model.sample(x, n_samples, rng)
    labels = np.argmax(np.asarray(q.q_values(S)), axis=1)
    A = q.n_actions
    if np.all(labels == labels[0]):
        return Explanation(x, np.zeros((A, n)), 0.0, degenerate=True)
    D = scheme.discretize_batch(S)
    Z = (D == D[0]).astype(float)
    width = kernel_width if kernel_width is not None else 0.75 * np.sqrt(n)
    dist2 = ((1.0 - Z) ** 2).sum(axis=1)
    w = np.sqrt(np.exp(-dist2 / width**2))
    Y = (labels[:, None] == np.arange(A)[None, :]).astype(float)
    coef, r2 = _weighted_ridge(Z, Y, w)
    return Explanation(x, coef, r2)


@dataclass
class ImportanceTable:
    """imp(polarity, action, feature): non-negative summed explanation weight."""

    pos: np.ndarray  # (n_actions, n_features)
    neg: np.ndarray

    @classmethod
    def zeros(cls, n_actions: int, n_features: int) -> "ImportanceTable":
        return cls(np.zeros((n_actions, n_features)), np.zeros((n_actions, n_features)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pos.shape

    def row(self, polarity: str, action: int) -> np.ndarray:
        return (self.pos if polarity == POS else self.neg)[action]

    def get(self, polarity: str, action: int, feature: int) -> float:
        return float(self.row(polarity, action)[feature])

    def add(self, explanation: Explanation) -> None:
        self.pos += np.maximum(explanation.weights, 0.0)
        self.neg += np.maximum(-explanation.weights, 0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["polarity", "action", "feature", "value"])
        for pol, M in ((POS, self.pos), (NEG, self.neg)):
            for a in range(M.shape[0]):
                for f in range(M.shape[1]):
                    wr.writerow([pol, a, f, repr(float(M[a, f]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ImportanceTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        A = 1 + max(int(r["action"]) for r in rows)
        n = 1 + max(int(r["feature"]) for r in rows)
        t = cls.zeros(A, n)
        for r in rows:
            M = t.pos if r["polarity"] == POS else t.neg
            M[int(r["action"]), int(r["feature"])] = float(r["value"])
        return t


def aggregate_importance(q, experience, scheme: DiscretizationScheme, n_feat: int = 200,
                         n_samples: int = 500, seed: int = 0, background=None) -> ImportanceTable:
    """Explain ``n_feat`` uniformly drawn experiences and sign-split the weights
    into imp(+, a, f) and imp(-, a, f)."""
    states = np.asarray(experience.states if hasattr(experience, "states") else experience, float)
    table = ImportanceTable.zeros(q.n_actions, len(scheme))
    if n_feat == 0:
        return table
    if len(states) == 0:
        raise ValueError("empty experience set")
    if n_feat > len(states):
        raise ValueError(f"n_feat={n_feat} exceeds the {len(states)} available experiences")
    model = PerturbationModel(states if background is None else background, scheme)
    rng = derive_rng(seed, "select")
    chosen = np.sort(rng.choice(len(states), size=n_feat, replace=False))
    for k, i in enumerate(chosen):
        table.add(explain_instance(q, states[i], scheme, n_samples,
                                   derive_seed(seed, "explain", k), model=model))
    return table
