"""Importance-weighted RIPPER-style rule mining, one (action, polarity) at a time.

Growing greedily adds the condition with the best FOIL gain times feature
importance; pruning drops trailing conditions while (p - n) / (p + n) on the
prune split does not decrease; separate-and-conquer repeats on the uncovered
inclusion examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .featurespace import DiscretizationScheme
from .rules import NEG, POS, Rule, coverage_mask, dedup
from .seeding import derive_rng

GROW, PRUNE, VALID = 0, 1, 2


@dataclass
class LabeledDataset:
    action: int
    polarity: str
    inc: np.ndarray  # discretized states, (m_inc, n)
    exc: np.ndarray
    inc_split: np.ndarray  # GROW / PRUNE / VALID per row
    exc_split: np.ndarray

    def part(self, which: int) -> tuple[np.ndarray, np.ndarray]:
        return self.inc[self.inc_split == which], self.exc[self.exc_split == which]

    @property
    def grow(self):
        return self.part(GROW)

    @property
    def prune(self):
        return self.part(PRUNE)

    @property
    def validation(self):
        return self.part(VALID)


@dataclass
class MineParams:
    seed: int = 0
    max_rules: int = 25  # per (action, polarity)
    max_error: float = 0.5
    grow_frac: float = 0.6
    prune_frac: float = 0.2


def _split(m: int, rng: np.random.Generator, grow_frac: float, prune_frac: float) -> np.ndarray:
    n_grow = int(round(grow_frac * m))
    n_prune = int(round(prune_frac * m))
    n_prune = min(n_prune, m - n_grow)
    labels = np.full(m, VALID, dtype=np.int8)
    perm = rng.permutation(m)
    labels[perm[:n_grow]] = GROW
    labels[perm[n_grow:n_grow + n_prune]] = PRUNE
    return labels


def build_datasets(experience, q, action: int, polarity: str, scheme: DiscretizationScheme,
                   seed: int = 0, params: MineParams | None = None, D=None) -> LabeledDataset | None:
    """inc/exc datasets for one (action, polarity); ``None`` if inc is empty.

    Positive: inc = states where the policy chose ``action``, exc = states where
    it chose another action.  Negative: inc = states whose minimal Q-value is
    at ``action``, exc = states where the policy chose ``action``.
    """
    params = params or MineParams(seed=seed)
    if len(experience) == 0:
        raise ValueError("empty experience set")
    if D is None:
        D = scheme.discretize_batch(experience.states)
    acts = np.asarray(experience.actions)
    if polarity == POS:
        inc_mask, exc_mask = acts == action, acts != action
    elif polarity == NEG:
        Q = experience.qvalues if q is None else np.asarray(q.q_values(experience.states))
        inc_mask, exc_mask = np.argmin(Q, axis=1) == action, acts == action
    else:
        raise ValueError(f"bad polarity {polarity!r}")
    if not inc_mask.any():
        return None
    rng = derive_rng(params.seed, "split", action, polarity)
    inc, exc = D[inc_mask], D[exc_mask]
    return LabeledDataset(action, polarity, inc, exc,
                          _split(len(inc), rng, params.grow_frac, params.prune_frac),
                          _split(len(exc), rng, params.grow_frac, params.prune_frac))


def build_all_datasets(experience, q, scheme, n_actions: int, params: MineParams | None = None):
    params = params or MineParams()
    D = scheme.discretize_batch(experience.states) if len(experience) else None
    out = {}
    if D is None:
        return out
    for a in range(n_actions):
        for pol in (POS, NEG):
            ds = build_datasets(experience, q, a, pol, scheme, params=params, D=D)
            if ds is not None:
                out[(a, pol)] = ds
    return out


def foil_gain(P: int, N: int, p: int, n: int) -> float:
    """FOIL information gain of refining a rule covering (P, N) to (p, n)."""
    if p == 0:
        return 0.0
    return p * (math.log2(p / (p + n)) - math.log2(P / (P + N)))


def weighted_foil_gain(condition: tuple[int, int], body, grow_inc, grow_exc, imp_row) -> float:
    """FOIL gain of adding ``condition`` to ``body`` (floored at 0) times the
    importance of the condition's feature."""
    f, v = condition
    if any(bf == f for bf, _ in body):
        raise ValueError(f"feature {f} already constrained in the rule")
    cur = Rule("+", 0, tuple(body))
    ci, ce = coverage_mask(cur, grow_inc), coverage_mask(cur, grow_exc)
    P, N = int(ci.sum()), int(ce.sum())
    p = int((ci & (grow_inc[:, f] == v)).sum())
    n = int((ce & (grow_exc[:, f] == v)).sum())
    if p == 0:
        return 0.0
    return max(0.0, foil_gain(P, N, p, n)) * float(imp_row[f])


def _counts(D: np.ndarray, K: int) -> np.ndarray:
    """(n_features, K) histogram of interval indices per feature."""
    m, n = D.shape
    if m == 0:
        return np.zeros((n, K), dtype=np.int64)
    flat = (D.astype(np.int64) + np.arange(n)[None, :] * K).ravel()
    return np.bincount(flat, minlength=n * K).reshape(n, K)


def grow_rule(grow_inc, grow_exc, imp_row, polarity: str, action: int) -> list[tuple[int, int]]:
    """Greedy growing; returns the conditions in the order they were added.

    Stops when the rule covers no exclusion example or no candidate scores
    above 0.  Ties go to the lower feature index, then the lower interval.
    """
    imp_row = np.asarray(imp_row, float)
    n = grow_inc.shape[1]
    K = int(max(grow_inc.max(initial=0), grow_exc.max(initial=0))) + 1
    ci = np.ones(len(grow_inc), dtype=bool)
    ce = np.ones(len(grow_exc), dtype=bool)
    used = np.zeros(n, dtype=bool)
    conds: list[tuple[int, int]] = []
    while ci.any() and ce.any() and not used.all():
        P, N = int(ci.sum()), int(ce.sum())
        p = _counts(grow_inc[ci], K).astype(float)
        nn = _counts(grow_exc[ce], K).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = p * (np.log2(p / (p + nn)) - math.log2(P / (P + N)))
        gain = np.where(p > 0, np.maximum(gain, 0.0), 0.0)
        score = gain * imp_row[:, None]
        score[used] = 0.0
        best = int(np.argmax(score))
        if score.flat[best] <= 0:
            break
        f, v = divmod(best, K)
        conds.append((f, v))
        used[f] = True
        ci &= grow_inc[:, f] == v
        ce &= grow_exc[:, f] == v
    return conds


def _prune_value(conds, prune_inc, prune_exc) -> float:
    r = Rule("+", 0, tuple(conds))
    p = int(coverage_mask(r, prune_inc).sum())
    n = int(coverage_mask(r, prune_exc).sum())
    if p + n == 0:
        return -math.inf
    return (p - n) / (p + n)


def prune_rule(conds: list[tuple[int, int]], prune_inc, prune_exc) -> list[tuple[int, int]]:
    """Drop trailing conditions while the prune-set value does not decrease;
    never prunes to an empty body."""
    conds = list(conds)
    while len(conds) > 1:
        if _prune_value(conds[:-1], prune_inc, prune_exc) >= _prune_value(conds, prune_inc, prune_exc):
            conds.pop()
        else:
            break
    return conds


def mine_combination(ds: LabeledDataset, imp_row, params: MineParams) -> list[Rule]:
    g_inc, g_exc = ds.grow
    p_inc, p_exc = ds.prune
    rules = []
    while len(g_inc) and len(rules) < params.max_rules:
        conds = grow_rule(g_inc, g_exc, imp_row, ds.polarity, ds.action)
        if not conds:
            break
        conds = prune_rule(conds, p_inc, p_exc)
        rule = Rule(ds.polarity, ds.action, tuple(conds), {"kind": "mined"})
        pi, pe = coverage_mask(rule, p_inc), coverage_mask(rule, p_exc)
        covered = int(pi.sum() + pe.sum())
        if covered and pe.sum() / covered > params.max_error:
            break
        gi = coverage_mask(rule, g_inc)
        if not gi.any():
            break
        rules.append(rule)
        g_inc = g_inc[~gi]
        p_inc = p_inc[~pi]
    return rules


def mine_rules(experience, q, imp, scheme: DiscretizationScheme, params: MineParams | None = None,
               datasets: dict | None = None) -> list[Rule]:
    """Mine rules for every (action, polarity); result is deduplicated and ordered
    by action, then polarity (+ before -), then discovery order."""
    params = params or MineParams()
    if len(experience) == 0:
        return []
    n_actions = imp.shape[0]
    if datasets is None:
        datasets = build_all_datasets(experience, q, scheme, n_actions, params)
    out = []
    for a in range(n_actions):
        for pol in (POS, NEG):
            ds = datasets.get((a, pol))
            if ds is not None:
                out.extend(mine_combination(ds, imp.row(pol, a), params))
    return dedup(out)


def rule_quality(rule: Rule, inc, exc) -> tuple[float, float, int]:
    """(accuracy, coverage, hits) of a rule on an inc/exc pair; accuracy is NaN
    when the rule triggers on no example."""
    hi = int(coverage_mask(rule, inc).sum())
    he = int(coverage_mask(rule, exc).sum())
    total = len(inc) + len(exc)
    hits = hi + he
    acc = hi / hits if hits else float("nan")
    cov = hits / total if total else 0.0
    return acc, cov, hits


def filter_rules(rules, datasets: dict, min_acc: float = 0.9, min_cov: float = 0.01) -> list[Rule]:
    """Keep rules reaching both thresholds on their combination's validation split."""
    if not (0 <= min_acc <= 1 and 0 <= min_cov <= 1):
        raise ValueError("thresholds must lie in [0, 1]")
    kept = []
    for r in rules:
        ds = datasets.get((r.action, r.polarity))
        if ds is None:
            continue
        acc, cov, hits = rule_quality(r, *ds.validation)
        if hits == 0:
            continue
        if acc >= min_acc and cov >= min_cov:
            kept.append(r.with_meta(stats={"accuracy": acc, "coverage": cov, "support": hits}))
    return kept
