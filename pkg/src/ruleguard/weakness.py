"""Weakness detection: guided vs unguided rewards under a one-sided Welch
test, plus the random-testing (RT) and random-rules (RR) baselines."""

from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .featurespace import DiscretizationScheme
from .guided import EvalResult, evaluate_guided, evaluate_unguided, evaluate_with_guide
from .metamorph import generalize
from .rules import Rule
from .seeding import derive_rng, derive_seed
from .stats import welch_test

MT, RT, RR = "MT", "RT", "RR"


@dataclass
class WeaknessReport:
    method: str
    label: str
    origin: Rule | None
    members: int
    guided: EvalResult
    baseline: EvalResult
    t: float
    df: float
    p: float
    alpha: float
    weakness: bool
    rules: list[Rule] = field(default_factory=list, repr=False)

    @classmethod
    def compare(cls, method, label, origin, rules, guided: EvalResult, baseline: EvalResult,
                alpha: float) -> "WeaknessReport":
        w = welch_test(guided.mean, guided.std, guided.n, baseline.mean, baseline.std, baseline.n)
        verdict = bool(guided.mean > baseline.mean and w.p < alpha)
        return cls(method, label, origin, len(rules), guided, baseline, w.t, w.df, w.p, alpha,
                   verdict, list(rules))

    def row(self) -> dict:
        return {
            "method": self.method,
            "label": self.label,
            "origin": "" if self.origin is None else self.origin.text(),
            "origin_id": "" if self.origin is None else self.origin.rule_id,
            "members": self.members,
            "guided_mean": repr(self.guided.mean),
            "guided_stderr": repr(self.guided.stderr),
            "baseline_mean": repr(self.baseline.mean),
            "baseline_stderr": repr(self.baseline.stderr),
            "n": self.guided.n,
            "t": repr(self.t),
            "df": repr(self.df),
            "p": repr(self.p),
            "alpha": repr(self.alpha),
            "weakness": int(self.weakness),
            "enforced": self.guided.enforced,
            "blocked": self.guided.blocked,
            "fallback": self.guided.fallback,
        }


def reports_csv(reports) -> str:
    buf = io.StringIO()
    rows = [r.row() for r in reports]
    fields = list(rows[0]) if rows else ["method", "label", "origin", "weakness"]
    wr = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
    return buf.getvalue()


def read_reports_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def detection_ratio(reports) -> float:
    """Fraction of reports with a weakness verdict (0 for no reports)."""
    reports = list(reports)
    return sum(r.weakness for r in reports) / len(reports) if reports else 0.0


def detect_weaknesses(q, rules, mrs, env, scheme: DiscretizationScheme, n: int = 250,
                      alpha: float = 0.05, seed: int = 0, baseline: EvalResult | None = None,
                      workers: int = 1, cap: int = 10_000) -> list[WeaknessReport]:
    """One report per mined rule, guiding with its generalization M_gen.

    Guided and unguided runs share one episode seed stream.
    """
    if baseline is None:
        baseline = evaluate_unguided(q, n, env, seed, workers)
    out = []
    for k, rule in enumerate(rules):
        members = generalize(rule, mrs, cap).members
        guided = evaluate_guided(q, members, n, env, scheme, seed, workers=workers)
        out.append(WeaknessReport.compare(MT, f"mt{k}", rule, members, guided, baseline, alpha))
    return out


# -- random testing -------------------------------------------------------------

@dataclass(frozen=True)
class RTConfig:
    k: int = 3  # buckets (percent of the state space) perturbed per run
    runs: int = 100  # per mode
    buckets: int = 100
    modes: tuple[str, ...] = ("block", "enforce")

    def __post_init__(self):
        if not 0 <= self.k <= self.buckets:
            raise ValueError("k must lie in [0, buckets]")
        for m in self.modes:
            if m not in ("block", "enforce"):
                raise ValueError(f"unknown RT mode {m!r}")


def state_bucket(dstate, run_seed: int, buckets: int = 100) -> int:
    """Deterministic bucket of a discretized state for one RT run."""
    h = hashlib.blake2b(np.asarray(dstate, dtype=np.int16).tobytes(), digest_size=8,
                        key=int(run_seed).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little") % buckets


class RandomGuide:
    """Blocks or enforces a fixed random action on a few state buckets."""

    def __init__(self, scheme: DiscretizationScheme, n_actions: int, run_seed: int,
                 k: int, mode: str, buckets: int = 100):
        self.scheme = scheme
        self.n_actions = n_actions
        self.run_seed = run_seed
        self.mode = mode
        self.buckets = buckets
        rng = derive_rng(run_seed, "rt-buckets")
        chosen = rng.choice(buckets, size=k, replace=False)
        acts = rng.integers(n_actions, size=k)
        self.mapping = {int(b): int(a) for b, a in zip(chosen, acts)}

    def flags(self, obs):
        pos = np.zeros(self.n_actions, bool)
        neg = np.zeros(self.n_actions, bool)
        if self.mapping:
            b = state_bucket(self.scheme.discretize(obs), self.run_seed, self.buckets)
            a = self.mapping.get(b)
            if a is not None:
                (neg if self.mode == "block" else pos)[a] = True
        return pos, neg


def rt_baseline(q, env, scheme: DiscretizationScheme, cfg: RTConfig = RTConfig(), n: int = 250,
                alpha: float = 0.05, seed: int = 0, baseline: EvalResult | None = None,
                workers: int = 1) -> list[WeaknessReport]:
    if baseline is None:
        baseline = evaluate_unguided(q, n, env, seed, workers)
    out = []
    for mode in cfg.modes:
        for r in range(cfg.runs):
            run_seed = derive_seed(seed, "rt", mode, r)
            guide = RandomGuide(scheme, env.n_actions, run_seed, cfg.k, mode, cfg.buckets)
            guided = evaluate_with_guide(q, guide, n, env, seed, workers=workers)
            out.append(WeaknessReport.compare(RT, f"rt-{mode}-{r}", None, [], guided, baseline, alpha))
    return out


# -- random rules ------------------------------------------------------------------

def sample_random_rule_sets(rules, set_sizes, n_sets: int, seed: int) -> list[list[Rule]]:
    """Random rule sets mimicking the mined rules.

    Set sizes come from ``set_sizes`` (the M_gen sizes), rule lengths,
    polarities and head actions from the mined rules' empirical
    distributions, and conditions uniformly from the multiset of conditions
    appearing in the mined rules.  Conditions on an already used feature are
    redrawn; a rule gets shorter only when the condition pool runs out of
    distinct features.
    """
    rules = list(rules)
    if not rules:
        raise ValueError("need at least one mined rule")
    sizes = np.asarray(list(set_sizes), dtype=np.int64)
    if len(sizes) == 0:
        raise ValueError("need at least one set size")
    rng = derive_rng(seed, "rr")
    lengths = np.array([len(r) for r in rules])
    pols = [r.polarity for r in rules]
    acts = np.array([r.action for r in rules])
    pool = [c for r in rules for c in r.body]
    n_distinct = len({f for f, _ in pool})
    out = []
    for _ in range(n_sets):
        size = int(sizes[rng.integers(len(sizes))])
        rs = []
        for _ in range(size):
            L = min(int(lengths[rng.integers(len(lengths))]), n_distinct)
            pol = pols[rng.integers(len(pols))]
            act = int(acts[rng.integers(len(acts))])
            body: dict[int, int] = {}
            while len(body) < L:
                f, v = pool[rng.integers(len(pool))]
                if f not in body:
                    body[f] = v
            rs.append(Rule(pol, act, tuple(body.items()), {"kind": "random"}))
        out.append(rs)
    return out


def rr_baseline(q, env, scheme: DiscretizationScheme, rules, set_sizes, n_sets: int, n: int = 250,
                alpha: float = 0.05, seed: int = 0, baseline: EvalResult | None = None,
                workers: int = 1) -> list[WeaknessReport]:
    if baseline is None:
        baseline = evaluate_unguided(q, n, env, seed, workers)
    out = []
    for k, rs in enumerate(sample_random_rule_sets(rules, set_sizes, n_sets, seed)):
        guided = evaluate_guided(q, rs, n, env, scheme, seed, workers=workers)
        out.append(WeaknessReport.compare(RR, f"rr{k}", None, rs, guided, baseline, alpha))
    return out


def total_variation(a, b) -> float:
    """Total-variation distance between the empirical distributions of two samples."""
    ca, cb = Counter(a), Counter(b)
    na, nb = sum(ca.values()), sum(cb.values())
    return 0.5 * sum(abs(ca[k] / na - cb[k] / nb) for k in set(ca) | set(cb))

