"""Metamorphic relations over rules: a small DSL, a relation checker, rule
generation, and fixed-point generalization.

DSL::

    # 90-degree clockwise turn, north -> east
    mr rot_N_E {
        actions 0 -> 2;
        map 62 -> 64 eq;          # same interval
        map 7 -> 7 {0:1, 1:2};    # explicit interval map
        ignore 67;                # drop conditions on feature 67
    }

Features may be given by index or by schema name.  Relations act on
interval indices, not raw values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .featurespace import DiscretizationScheme, FeatureSchema
from .rules import Rule


class MRSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line, self.col = line, col


class ClosureTooLarge(RuntimeError):
    pass


# -- relation kinds ----------------------------------------------------------

@dataclass(frozen=True)
class Equality:
    def contains(self, x: int, y: int) -> bool:
        return x == y

    def image(self, x: int) -> int | None:
        return x


@dataclass(frozen=True)
class Universal:
    """Every value relates to every value; generation drops the condition."""

    def contains(self, x: int, y: int) -> bool:
        return True

    def image(self, x: int) -> int | None:
        return None


@dataclass(frozen=True)
class IntervalMap:
    """Finite relation on interval indices.  Generation needs a unique image."""

    pairs: frozenset

    @classmethod
    def from_dict(cls, mapping: dict) -> "IntervalMap":
        return cls(frozenset((int(k), int(v)) for k, v in mapping.items()))

    def contains(self, x: int, y: int) -> bool:
        return (x, y) in self.pairs

    def image(self, x: int) -> int | None:
        ys = [b for a, b in self.pairs if a == x]
        return ys[0] if len(ys) == 1 else None


@dataclass(frozen=True)
class FeatureRelation:
    source_action: int
    target_action: int
    source: int
    target: int
    relation: object


@dataclass(frozen=True)
class MetamorphicRelation:
    name: str
    source_action: int
    target_action: int
    relations: tuple[FeatureRelation, ...]
    by_source: dict = field(init=False, compare=False, repr=False)
    targets: frozenset = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        by_source = {}
        for fr in self.relations:
            if (fr.source_action, fr.target_action) != (self.source_action, self.target_action):
                raise ValueError(f"mr {self.name}: relation on actions "
                                 f"{fr.source_action}->{fr.target_action} differs from the mr's")
            if fr.source in by_source:
                raise ValueError(f"mr {self.name}: duplicate source feature {fr.source}")
            by_source[fr.source] = fr
        targets = [fr.target for fr in self.relations if not isinstance(fr.relation, Universal)]
        if len(set(targets)) != len(targets):
            raise ValueError(f"mr {self.name}: a target feature is mapped more than once")
        object.__setattr__(self, "by_source", by_source)
        object.__setattr__(self, "targets", frozenset(fr.target for fr in self.relations))

    @classmethod
    def build(cls, name: str, source_action: int, target_action: int,
              relations: Iterable[tuple]) -> "MetamorphicRelation":
        """``relations`` holds ``(source, target, relation)`` triples."""
        frs = tuple(FeatureRelation(source_action, target_action, i, j, R) for i, j, R in relations)
        return cls(name, source_action, target_action, frs)


# -- parser --------------------------------------------------------------------

_TOKEN = re.compile(r"(?P<comment>#[^\n]*)|(?P<sym>->|[{};:,])|(?P<int>-?\d+)"
                    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)")


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    """(kind, text, line, column) tuples, ending with an ``eof`` token."""
    toks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        pos = 0
        while pos < len(line):
            if line[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(line, pos)
            if m is None:
                raise MRSyntaxError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            if m.lastgroup != "comment":
                toks.append((m.lastgroup, m.group(), lineno, pos + 1))
            pos = m.end()
    n_lines = max(1, len(text.splitlines()))
    last = text.splitlines()[-1] if text.splitlines() else ""
    toks.append(("eof", "", n_lines, len(last) + 1))
    return toks


class _Parser:
    def __init__(self, text, schema, n_actions, scheme):
        self.toks = _tokenize(text)
        self.i = 0
        self.schema = schema
        self.n_actions = n_actions
        self.scheme = scheme
        self.n_features = len(schema) if schema is not None else (len(scheme) if scheme is not None else None)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = repr(value) if value is not None else kind
            got = tok[1] if tok[0] != "eof" else "end of input"
            raise MRSyntaxError(f"expected {want}, got {got!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def action(self):
        tok = self.take("int")
        a = int(tok[1])
        if a < 0 or (self.n_actions is not None and a >= self.n_actions):
            raise MRSyntaxError(f"action {a} out of range", tok[2], tok[3])
        return a

    def feature(self):
        tok = self.peek()
        if tok[0] == "int":
            self.i += 1
            f = int(tok[1])
            if f < 0 or (self.n_features is not None and f >= self.n_features):
                raise MRSyntaxError(f"feature index {f} out of range", tok[2], tok[3])
            return f, tok
        if tok[0] == "name":
            self.i += 1
            if self.schema is None:
                raise MRSyntaxError(f"feature name {tok[1]!r} needs a schema", tok[2], tok[3])
            try:
                return self.schema.index_of(tok[1]), tok
            except KeyError:
                raise MRSyntaxError(f"unknown feature {tok[1]!r}", tok[2], tok[3]) from None
        raise MRSyntaxError(f"expected a feature, got {tok[1]!r}", tok[2], tok[3])

    def n_int(self, f):
        return None if self.scheme is None else self.scheme.intervals[f].n_intervals

    def relation(self, name, a, b, seen):
        kw = self.peek()
        if kw[0] != "name":
            got = kw[1] if kw[0] != "eof" else "end of input"
            raise MRSyntaxError(f"expected 'map', 'ignore' or '}}', got {got!r}", kw[2], kw[3])
        self.i += 1
        if kw[1] == "ignore":
            f, ftok = self.feature()
            src, dst, R = f, f, Universal()
        elif kw[1] == "map":
            src, ftok = self.feature()
            self.take("sym", "->")
            dst, dtok = self.feature()
            tok = self.peek()
            if tok[1] == "eq":
                self.i += 1
                R = Equality()
                ki, kj = self.n_int(src), self.n_int(dst)
                if ki is not None and ki != kj:
                    raise MRSyntaxError(f"eq needs equal interval counts ({src}: {ki}, {dst}: {kj})",
                                        tok[2], tok[3])
            elif tok[1] == "{":
                R = self.map_literal(src, dst)
            else:
                raise MRSyntaxError(f"expected 'eq' or a map literal, got {tok[1]!r}", tok[2], tok[3])
        else:
            raise MRSyntaxError(f"expected 'map' or 'ignore', got {kw[1]!r}", kw[2], kw[3])
        if src in seen:
            raise MRSyntaxError(f"duplicate source feature {src} in mr {name}", ftok[2], ftok[3])
        seen.add(src)
        self.take("sym", ";")
        return FeatureRelation(a, b, src, dst, R)

    def map_literal(self, src, dst):
        self.take("sym", "{")
        pairs = set()
        while True:
            kt = self.take("int")
            self.take("sym", ":")
            vt = self.take("int")
            k, v = int(kt[1]), int(vt[1])
            ki, kj = self.n_int(src), self.n_int(dst)
            if k < 0 or (ki is not None and k >= ki):
                raise MRSyntaxError(f"interval {k} out of range for feature {src}", kt[2], kt[3])
            if v < 0 or (kj is not None and v >= kj):
                raise MRSyntaxError(f"interval {v} out of range for feature {dst}", vt[2], vt[3])
            pairs.add((k, v))
            if self.peek()[1] == ",":
                self.i += 1
                continue
            self.take("sym", "}")
            return IntervalMap(frozenset(pairs))

    def mr(self):
        self.take("name", "mr")
        name_tok = self.take("name")
        self.take("sym", "{")
        self.take("name", "actions")
        a = self.action()
        self.take("sym", "->")
        b = self.action()
        self.take("sym", ";")
        rels, seen = [], set()
        while self.peek()[1] != "}":
            rels.append(self.relation(name_tok[1], a, b, seen))
        self.take("sym", "}")
        try:
            return MetamorphicRelation(name_tok[1], a, b, tuple(rels))
        except ValueError as e:
            raise MRSyntaxError(str(e), name_tok[2], name_tok[3]) from None

    def spec(self):
        out = []
        while self.peek()[0] != "eof":
            out.append(self.mr())
        return out


def parse_mr_spec(text: str, schema: FeatureSchema | None = None, n_actions: int | None = None,
                  scheme: DiscretizationScheme | None = None) -> list[MetamorphicRelation]:
    """Parse MR DSL text.  With a schema/scheme/action count, feature names,
    ranges and interval counts are validated too."""
    if schema is None and scheme is not None:
        schema = scheme.schema
    return _Parser(text, schema, n_actions, scheme).spec()


def bundled_spec(name: str) -> str:
    """Text of a bundled MR file, e.g. ``pacman_rotation``."""
    return resources.files("ruleguard.data").joinpath(f"{name}.mr").read_text()


def format_mr_spec(mrs: Iterable[MetamorphicRelation]) -> str:
    out = []
    for mr in mrs:
        out.append(f"mr {mr.name} {{\n    actions {mr.source_action} -> {mr.target_action};\n")
        for fr in mr.relations:
            R = fr.relation
            if isinstance(R, Universal):
                out.append(f"    ignore {fr.source};\n")
            elif isinstance(R, Equality):
                out.append(f"    map {fr.source} -> {fr.target} eq;\n")
            else:
                lit = ", ".join(f"{k}:{v}" for k, v in sorted(R.pairs))
                out.append(f"    map {fr.source} -> {fr.target} {{{lit}}};\n")
        out.append("}\n")
    return "".join(out)


# -- rule semantics ------------------------------------------------------------------

def rules_related(r1: Rule, r2: Rule, mr: MetamorphicRelation) -> bool:
    """Whether ``r1 mr r2`` holds.

    Each feature relation needs either related conditions in both bodies or
    no condition on either feature; ignored (universal) features are
    unconstrained.  Conditions on features the mr does not mention must match
    exactly in both directions.
    """
    if r1.polarity != r2.polarity:
        return False
    if r1.action != mr.source_action or r2.action != mr.target_action:
        return False
    b1, b2 = dict(r1.body), dict(r2.body)
    for fr in mr.relations:
        if isinstance(fr.relation, Universal):
            continue
        x, y = b1.get(fr.source), b2.get(fr.target)
        if x is None and y is None:
            continue
        if x is None or y is None or not fr.relation.contains(x, y):
            return False
    for f, v in b1.items():
        if f not in mr.by_source and b2.get(f) != v:
            return False
    for f, v in b2.items():
        if f not in mr.targets and b1.get(f) != v:
            return False
    return True


def generate_via_mr(rule: Rule, mr: MetamorphicRelation) -> Rule | None:
    """Rewrite ``rule`` along ``mr``; ``None`` if generation is impossible
    (unmapped interval, clash with a copied condition, or empty body)."""
    if rule.action != mr.source_action:
        raise ValueError(f"rule head {rule.action} is not the mr's source action {mr.source_action}")
    body: dict[int, int] = {}
    copied: dict[int, int] = {}
    for f, v in rule.body:
        fr = mr.by_source.get(f)
        if fr is None:
            copied[f] = v
            continue
        if isinstance(fr.relation, Universal):
            continue
        y = fr.relation.image(v)
        if y is None:
            return None
        body[fr.target] = y
    for f, v in copied.items():
        if f in mr.targets:
            return None
        body[f] = v
    if not body:
        return None
    return Rule(rule.polarity, mr.target_action, tuple(body.items()),
                {"kind": "generalized", "parent": rule.rule_id, "mr": mr.name})


@dataclass
class GeneralizedRuleSet:
    origin: Rule
    members: list[Rule]
    # member key -> list of (parent rule id, mr name) edges that produced it
    applied: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.members)

    def keys(self) -> set:
        return {r.key for r in self.members}


def generalize(rule: Rule, mrs: Iterable[MetamorphicRelation], cap: int = 10_000) -> GeneralizedRuleSet:
    """Fixed-point closure of ``rule`` under the metamorphic relations."""
    mrs = list(mrs)
    members = [rule]
    index = {rule.key: rule}
    applied: dict = {rule.key: []}
    work = [rule]
    while work:
        cur = work.pop(0)
        for mr in mrs:
            if cur.action != mr.source_action:
                continue
            new = generate_via_mr(cur, mr)
            if new is None:
                continue
            if new.key in index:
                applied[new.key].append((cur.rule_id, mr.name))
                continue
            if len(members) >= cap:
                raise ClosureTooLarge(f"closure of {rule} exceeds {cap} rules; "
                                      "check the mrs for unbounded generation")
            index[new.key] = new
            members.append(new)
            applied[new.key] = [(cur.rule_id, mr.name)]
            work.append(new)
    return GeneralizedRuleSet(rule, members, applied)


def rotation_spec_text(n_ghosts: int = 2) -> str:
    """DSL text for the four 90-degree clockwise turns of the grid layout."""
    pairs = ((0, 2), (2, 1), (1, 3), (3, 0))
    names = {0: "N", 1: "S", 2: "E", 3: "W"}
    # N, S, E, W one-hot: N->E, S->W, E->S, W->N
    quad = (2, 3, 1, 0)
    blocks = [("capsule direction", 2), ("food direction", 9)]
    lines = []
    for a, b in pairs:
        lines.append(f"mr rot_{names[a]}_{names[b]} {{")
        lines.append(f"    actions {a} -> {b};")
        for label, base in blocks:
            lines.append(f"    # {label}")
            for k in range(4):
                lines.append(f"    map {base + k} -> {base + quad[k]} eq;")
        for g, gb in enumerate((14, 38)[:n_ghosts]):
            lines.append(f"    # ghost {g}: angle (8 sectors), direction, heading")
            for k in range(8):
                lines.append(f"    map {gb + 1 + k} -> {gb + 1 + (k + 2) % 8} eq;")
            for off in (9, 15):
                for k in range(4):
                    lines.append(f"    map {gb + off + k} -> {gb + off + quad[k]} eq;")
        lines.append("    # passable-direction flags")
        for k in range(4):
            lines.append(f"    map {62 + k} -> {62 + quad[k]} eq;")
        lines.append("    # coordinates carry no rotational meaning")
        for c in (67, 68, 36, 37, 60, 61):
            lines.append(f"    ignore {c};")
        lines.append("}")
    return "\n".join(lines) + "\n"
