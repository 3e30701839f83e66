"""Greedy composition of weakness-revealing rule sets into one guide, and
statistics on which feature groups the rules talk about."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .featurespace import DiscretizationScheme
from .guided import EvalResult, evaluate_guided, evaluate_unguided
from .metamorph import generalize
from .rules import Rule, dedup
from .seeding import derive_seed
from .weakness import WeaknessReport, detect_weaknesses


@dataclass
class CompositionStep:
    origin: str  # rule id
    cr: float
    accepted: bool


@dataclass
class CompositionResult:
    selected: list[str]  # origin rule ids of the accepted rule sets
    rules: list[Rule]  # composed rule set
    trajectory: list[float]  # cr_max after each accepted step, starting with the baseline
    steps: list[CompositionStep]
    final: EvalResult  # guided by ``rules`` on the composition seed stream
    unguided: EvalResult  # same stream, no guidance
    extended: EvalResult | None = None
    compose_seed: int = 0
    reports: list[WeaknessReport] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "selected": self.selected,
            "rules": [r.to_json() for r in self.rules],
            "trajectory": self.trajectory,
            "steps": [vars(s) for s in self.steps],
            "final": self.final.to_json(),
            "unguided": self.unguided.to_json(),
            "extended": None if self.extended is None else self.extended.to_json(),
            "compose_seed": self.compose_seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def table(self) -> list[tuple[str, float, float]]:
        """(policy, mean, stderr) rows: base, rule-guided, extended training."""
        rows = [("base", self.unguided.mean, self.unguided.stderr),
                ("rule-guided", self.final.mean, self.final.stderr)]
        if self.extended is not None:
            rows.append(("extended-training", self.extended.mean, self.extended.stderr))
        return rows


def greedy_compose(q, rules, mrs, env, scheme: DiscretizationScheme, n: int = 250,
                   alpha: float = 0.05, seed: int = 0, reports: list[WeaknessReport] | None = None,
                   extended_q=None, workers: int = 1) -> CompositionResult:
    """Greedy rule-set selection.

    Rules are visited in the given (mined) order.  A rule whose generalization
    revealed a weakness is tentatively added; the union is re-evaluated on a
    separate seed stream and kept iff its mean reward beats the best so far.
    ``reports`` may hold precomputed weakness reports aligned with ``rules``.
    """
    rules = list(rules)
    if reports is None:
        reports = detect_weaknesses(q, rules, mrs, env, scheme, n, alpha, seed, workers=workers)
    if len(reports) != len(rules):
        raise ValueError("reports must align with rules")
    cseed = derive_seed(seed, "compose")
    unguided = evaluate_unguided(q, n, env, cseed, workers)
    cr_max = unguided.mean
    final = unguided
    composed: list[Rule] = []
    selected, trajectory, steps = [], [cr_max], []
    for rule, rep in zip(rules, reports):
        if not rep.weakness:
            continue
        members = rep.rules or generalize(rule, mrs).members
        candidate = dedup(composed + list(members))
        res = evaluate_guided(q, candidate, n, env, scheme, cseed, workers=workers)
        ok = res.mean > cr_max
        steps.append(CompositionStep(rule.rule_id, res.mean, ok))
        if ok:
            composed, cr_max, final = candidate, res.mean, res
            selected.append(rule.rule_id)
            trajectory.append(cr_max)
    extended = None if extended_q is None else evaluate_unguided(extended_q, n, env, cseed, workers)
    return CompositionResult(selected, composed, trajectory, steps, final, unguided, extended,
                             cseed, reports)


def rule_feature_stats(rules, groups: dict[str, list[int]]) -> dict[str, float]:
    """Per group, the fraction of rules with at least one condition on it."""
    rules = list(rules)
    if not rules:
        return {}
    out = {}
    for name, idx in groups.items():
        s = set(idx)
        out[name] = sum(1 for r in rules if r.features & s) / len(rules)
    return out
