"""Feature schemas and per-feature interval discretizations.

Intervals are half-open ``[l, u)``.  A feature with boundaries
``b_1 < ... < b_m`` has ``m + 1`` intervals; interval 0 is ``(-inf, b_1)``
and interval ``m`` is ``[b_m, +inf)``, so :meth:`interval_of` is total on
the reals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    pass


class CorruptObservation(ValueError):
    """Raised when an observation contains NaN."""


@dataclass(frozen=True)
class Feature:
    name: str
    index: int
    kind: str = NUMERIC
    # one-hot group id; ``None`` for standalone features
    group: str | None = None


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self):
        for pos, f in enumerate(self.features):
            if f.index != pos:
                raise SchemaError(f"feature {f.name!r} has index {f.index}, expected {pos}")
            if f.kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"unknown kind {f.kind!r} for feature {f.name!r}")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        seen: dict[str, int] = {}
        last_group = None
        for f in self.features:
            if f.group is not None:
                if f.kind != CATEGORICAL:
                    raise SchemaError(f"one-hot member {f.name!r} must be categorical")
                if f.group in seen and last_group != f.group:
                    raise SchemaError(f"one-hot group {f.group!r} is not contiguous")
                seen[f.group] = f.index
            last_group = f.group

    @classmethod
    def from_specs(cls, specs: Iterable[tuple]) -> "FeatureSchema":
        """Build from ``(name, kind[, group])`` tuples in index order."""
        feats = []
        for i, spec in enumerate(specs):
            name, kind, *rest = spec
            feats.append(Feature(name, i, kind, rest[0] if rest else None))
        return cls(tuple(feats))

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        for f in self.features:
            if f.name == name:
                return f.index
        raise KeyError(name)

    def groups(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for f in self.features:
            if f.group is not None:
                out.setdefault(f.group, []).append(f.index)
        return out

    def digest(self) -> str:
        payload = json.dumps([[f.name, f.kind, f.group] for f in self.features])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_json(self) -> list[dict]:
        return [{"name": f.name, "index": f.index, "kind": f.kind, "group": f.group}
                for f in self.features]

    @classmethod
    def from_json(cls, data: list[dict]) -> "FeatureSchema":
        return cls(tuple(Feature(d["name"], d["index"], d["kind"], d.get("group")) for d in data))


@dataclass(frozen=True)
class FeatureIntervals:
    """Boundary list of one feature.

    For categorical features ``values`` holds the distinct category values;
    boundaries are then the midpoints between consecutive values, which maps
    every category to its own interval.
    """

    kind: str
    boundaries: tuple[float, ...]
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        b = self.boundaries
        if any(not (b[i] < b[i + 1]) for i in range(len(b) - 1)):
            raise SchemaError(f"boundaries must be strictly increasing: {b}")

    @property
    def n_intervals(self) -> int:
        return len(self.boundaries) + 1

    def interval_of(self, x: float) -> int:
        if x != x:
            raise CorruptObservation("NaN feature value")
        return int(np.searchsorted(self.boundaries, x, side="right"))

    def bounds(self, k: int) -> tuple[float, float]:
        lo = -np.inf if k == 0 else self.boundaries[k - 1]
        hi = np.inf if k == len(self.boundaries) else self.boundaries[k]
        return lo, hi

    def representative(self, k: int) -> float:
        """A value lying inside interval ``k``."""
        if self.values is not None:
            return self.values[k]
        lo, hi = self.bounds(k)
        if np.isinf(lo) and np.isinf(hi):
            return 0.0
        if np.isinf(lo):
            return hi - 1.0
        if np.isinf(hi):
            return lo + 1.0
        return 0.5 * (lo + hi)


def categorical_intervals(values: Sequence[float] = (0.0, 1.0)) -> FeatureIntervals:
    vals = tuple(sorted(set(float(v) for v in values)))
    mids = tuple((vals[i] + vals[i + 1]) / 2 for i in range(len(vals) - 1))
    return FeatureIntervals(CATEGORICAL, mids, vals)


@dataclass(frozen=True)
class DiscretizationScheme:
    schema: FeatureSchema
    intervals: tuple[FeatureIntervals, ...]
    # padded boundary matrix for vectorized discretization
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.intervals) != len(self.schema):
            raise SchemaError("one interval spec per feature required")
        width = max([len(iv.boundaries) for iv in self.intervals] + [1])
        table = np.full((len(self.intervals), width), np.inf)
        for i, iv in enumerate(self.intervals):
            table[i, : len(iv.boundaries)] = iv.boundaries
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def n_intervals(self) -> np.ndarray:
        return np.array([iv.n_intervals for iv in self.intervals])

    def interval_of(self, feature: int, x: float) -> int:
        return self.intervals[feature].interval_of(x)

    def discretize(self, state) -> np.ndarray:
        return discretize(state, self)

    def discretize_batch(self, states) -> np.ndarray:
        X = np.asarray(states, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self):
            raise SchemaError(f"expected (m, {len(self)}) states, got {X.shape}")
        if np.isnan(X).any():
            raise CorruptObservation("NaN in observations")
        return (X[:, :, None] >= self._table[None, :, :]).sum(axis=2).astype(np.int16)

    def to_json(self) -> dict:
        out = {}
        for f, iv in zip(self.schema.features, self.intervals):
            entry = {"index": f.index, "kind": iv.kind, "boundaries": list(iv.boundaries)}
            if iv.values is not None:
                entry["values"] = list(iv.values)
            out[f.name] = entry
        return out

    def dumps(self) -> str:
        return json.dumps({"schema": self.schema.to_json(), "features": self.to_json()}, indent=1)

    @classmethod
    def loads(cls, text: str) -> "DiscretizationScheme":
        data = json.loads(text)
        schema = FeatureSchema.from_json(data["schema"])
        ivs = []
        for f in schema.features:
            e = data["features"][f.name]
            vals = tuple(e["values"]) if "values" in e else None
            ivs.append(FeatureIntervals(e["kind"], tuple(e["boundaries"]), vals))
        return cls(schema, tuple(ivs))


def _check_samples(samples, schema: FeatureSchema) -> np.ndarray:
    X = np.asarray(samples, dtype=float)
    if X.size == 0:
        raise SchemaError("empty sample set")
    if X.ndim != 2 or X.shape[1] != len(schema):
        raise SchemaError(f"samples have shape {X.shape}, schema has {len(schema)} features")
    return X


def _categorical_for(f: Feature, column: np.ndarray) -> FeatureIntervals:
    if f.group is not None:
        return categorical_intervals((0.0, 1.0))
    return categorical_intervals(np.unique(column))


def build_decile_scheme(samples, schema: FeatureSchema) -> DiscretizationScheme:
    """Numeric features split at the empirical deciles (linear interpolation);
    repeated quantile values collapse, so a feature gets at most 10 intervals."""
    X = _check_samples(samples, schema)
    if X.shape[0] < 10:
        raise SchemaError("decile discretization needs at least 10 samples")
    qs = np.linspace(0.1, 0.9, 9)
    ivs = []
    for f in schema.features:
        col = X[:, f.index]
        if f.kind == CATEGORICAL:
            ivs.append(_categorical_for(f, col))
            continue
        cuts = np.unique(np.quantile(col, qs, method="linear"))
        # a cut at the sample minimum would leave interval 0 empty
        cuts = cuts[cuts > col.min()]
        ivs.append(FeatureIntervals(NUMERIC, tuple(float(c) for c in cuts)))
    return DiscretizationScheme(schema, tuple(ivs))


def build_uniform_scheme(schema: FeatureSchema, samples, bins: int = 10) -> DiscretizationScheme:
    """Equal-width bins over the observed [min, max] of each numeric feature.

    Values outside the observed range fall into the end intervals.
    """
    if bins < 2:
        raise SchemaError("bins must be at least 2")
    X = _check_samples(samples, schema)
    ivs = []
    for f in schema.features:
        col = X[:, f.index]
        if f.kind == CATEGORICAL:
            ivs.append(_categorical_for(f, col))
            continue
        lo, hi = float(col.min()), float(col.max())
        if hi <= lo:
            ivs.append(FeatureIntervals(NUMERIC, ()))
            continue
        cuts = lo + (hi - lo) * np.arange(1, bins) / bins
        ivs.append(FeatureIntervals(NUMERIC, tuple(float(c) for c in cuts)))
    return DiscretizationScheme(schema, tuple(ivs))


def identity_scheme(schema: FeatureSchema) -> DiscretizationScheme:
    """Every feature treated as binary {0, 1}; handy for synthetic data."""
    return DiscretizationScheme(schema, tuple(categorical_intervals() for _ in schema.features))


def discretize(state, scheme: DiscretizationScheme) -> np.ndarray:
    """Map a raw state to its vector of interval indices."""
    x = np.asarray(state, dtype=float)
    if x.shape != (len(scheme),):
        raise SchemaError(f"state has shape {x.shape}, scheme expects ({len(scheme)},)")
    if np.isnan(x).any():
        raise CorruptObservation("NaN in observation")
    return (x[:, None] >= scheme._table).sum(axis=1).astype(np.int16)
