"""Horn-clause rules over discretized states.

A rule ``-action(0) <- f62=0`` has polarity ``"-"``, head action 0 and a body
of (feature, interval) conditions, kept sorted by feature index so equal rules
compare and hash equal.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

POS, NEG = "+", "-"


@dataclass(frozen=True)
class Rule:
    polarity: str
    action: int
    body: tuple[tuple[int, int], ...]
    provenance: Mapping = field(default_factory=lambda: {"kind": "mined"}, compare=False, hash=False)
    stats: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.polarity not in (POS, NEG):
            raise ValueError(f"polarity must be '+' or '-', got {self.polarity!r}")
        body = tuple(sorted((int(f), int(v)) for f, v in self.body))
        feats = [f for f, _ in body]
        if len(set(feats)) != len(feats):
            raise ValueError(f"at most one condition per feature: {body}")
        if any(f < 0 for f in feats):
            raise ValueError("negative feature index")
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "action", int(self.action))

    @classmethod
    def make(cls, polarity: str, action: int, body: Mapping[int, int] | Iterable, **kw) -> "Rule":
        items = body.items() if isinstance(body, Mapping) else body
        return cls(polarity, action, tuple(items), **kw)

    @property
    def key(self) -> tuple:
        return (self.polarity, self.action, self.body)

    @property
    def rule_id(self) -> str:
        return hashlib.sha1(repr(self.key).encode()).hexdigest()[:10]

    @property
    def features(self) -> set[int]:
        return {f for f, _ in self.body}

    def condition(self, feature: int) -> int | None:
        for f, v in self.body:
            if f == feature:
                return v
        return None

    def __len__(self) -> int:
        return len(self.body)

    def with_meta(self, provenance=None, stats=None) -> "Rule":
        return Rule(self.polarity, self.action, self.body,
                    self.provenance if provenance is None else provenance,
                    self.stats if stats is None else stats)

    def text(self, names: list[str] | None = None) -> str:
        def cond(f, v):
            return f"{names[f] if names else 'f' + str(f)}={v}"
        body = " & ".join(cond(f, v) for f, v in self.body) or "true"
        return f"{self.polarity}action({self.action}) <- {body}"

    __str__ = text

    def to_json(self) -> dict:
        return {
            "polarity": self.polarity,
            "action": self.action,
            "body": [{"feature": f, "interval": v} for f, v in self.body],
            "provenance": dict(self.provenance),
            "stats": dict(self.stats),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Rule":
        return cls(d["polarity"], d["action"], tuple((c["feature"], c["interval"]) for c in d["body"]),
                   d.get("provenance", {"kind": "mined"}), d.get("stats", {}))


def rule_triggers(rule: Rule, dstate) -> bool:
    """True iff every body condition matches the discretized state."""
    n = len(dstate)
    for f, v in rule.body:
        if f >= n:
            raise IndexError(f"rule conditions on feature {f}, state has {n} features")
        if dstate[f] != v:
            return False
    return True


def coverage_mask(rule: Rule, D: np.ndarray) -> np.ndarray:
    """Boolean mask of the rows of ``D`` (discretized states) the rule triggers on."""
    mask = np.ones(len(D), dtype=bool)
    for f, v in rule.body:
        mask &= D[:, f] == v
    return mask


class RuleIndex:
    """Compiled rule set for fast per-step trigger checks."""

    def __init__(self, rules: Iterable[Rule], n_features: int | None = None):
        self.rules = list(rules)
        feats, vals, owner = [], [], []
        for k, r in enumerate(self.rules):
            for f, v in r.body:
                feats.append(f)
                vals.append(v)
                owner.append(k)
        if n_features is not None and feats and max(feats) >= n_features:
            raise ValueError(f"rule conditions on feature {max(feats)} but schema has {n_features}")
        self._feats = np.array(feats, dtype=np.int64)
        self._vals = np.array(vals, dtype=np.int64)
        self._owner = np.array(owner, dtype=np.int64)
        self._len = np.array([len(r) for r in self.rules], dtype=np.int64)
        self.actions = np.array([r.action for r in self.rules], dtype=np.int64)
        self.positive = np.array([r.polarity == POS for r in self.rules], dtype=bool)

    def __len__(self) -> int:
        return len(self.rules)

    def triggered(self, dstate) -> np.ndarray:
        if not self.rules:
            return np.zeros(0, dtype=bool)
        hits = np.asarray(dstate)[self._feats] == self._vals
        counts = np.bincount(self._owner[hits], minlength=len(self.rules))
        return counts == self._len


def dumps_jsonl(rules: Iterable[Rule]) -> str:
    return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in rules)


def loads_jsonl(text: str) -> list[Rule]:
    return [Rule.from_json(json.loads(ln)) for ln in text.splitlines() if ln.strip()]


def dedup(rules: Iterable[Rule]) -> list[Rule]:
    """Keep the first occurrence of each canonical rule, preserving order."""
    seen, out = set(), []
    for r in rules:
        if r.key not in seen:
            seen.add(r.key)
            out.append(r)
    return out
