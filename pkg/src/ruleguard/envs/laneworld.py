"""Three-lane highway analogue with a 10 x 7 vehicle observation.

Actions: 0 lane left, 1 idle, 2 lane right, 3 faster, 4 slower.

Each observation row describes one vehicle with the properties
``presence, x, y, vx, vy, cos_h, sin_h``.  Row 0 is the ego vehicle in
absolute terms (x = 0, y = lane index, vx = speed / 30); rows 1..9 are the
nearest other vehicles relative to the ego vehicle (x in units of 100 m,
y in lanes, vx as speed difference / 30), sorted by longitudinal distance.
Missing vehicles are zero rows, so their presence flag is 0.

Lane 0 is the leftmost lane.  The ego vehicle collects +1 per step alive
plus a speed bonus and loses 50 on a collision, which ends the episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..featurespace import CATEGORICAL, NUMERIC, FeatureSchema
from ..seeding import derive_rng
from .base import EnvContractError

LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER = range(5)
PROPS = ("presence", "x", "y", "vx", "vy", "cos_h", "sin_h")
N_VEHICLES = 10
SPEEDS = (20.0, 25.0, 30.0)


def lane_schema() -> FeatureSchema:
    specs = []
    for k in range(N_VEHICLES):
        for p in PROPS:
            specs.append((f"v{k}_{p}", CATEGORICAL if p == "presence" else NUMERIC))
    return FeatureSchema.from_specs(specs)


def feature_index(vehicle: int, prop: str) -> int:
    return vehicle * len(PROPS) + PROPS.index(prop)


@dataclass
class LaneWorldConfig:
    lanes: int = 3
    n_traffic: int = 14
    road_length: float = 400.0  # traffic wraps around a ring road of this length
    max_steps: int = 100
    collision_penalty: float = 50.0
    speed_bonus: float = 0.5  # per speed level above the lowest
    vehicle_length: float = 5.0
    sensing_range: float = 100.0

    def __post_init__(self):
        if self.lanes < 2:
            raise ValueError("need at least two lanes")


class LaneWorld:
    n_actions = 5

    def __init__(self, config: LaneWorldConfig | None = None, **kw):
        self.config = config or LaneWorldConfig(**kw)
        self.schema = lane_schema()
        self.max_steps = self.config.max_steps
        self._done = True
        self.truncated = False

    def reset(self, seed: int = 0) -> np.ndarray:
        c = self.config
        self._rng = rng = derive_rng(seed, "env")
        self.ego_lane = c.lanes // 2
        self.ego_speed = 1
        self.ego_x = 0.0
        self.ego_vy = 0.0
        # traffic spread over the ring, keeping clear of the ego start cell
        xs = rng.uniform(15.0, c.road_length - 15.0, size=c.n_traffic)
        self.tx = xs
        self.tlane = rng.integers(c.lanes, size=c.n_traffic)
        self.tspeed = rng.uniform(18.0, 24.0, size=c.n_traffic)
        self.steps = 0
        self._done = False
        self.truncated = False
        self.crashed = False
        return self.observe()

    @property
    def done(self) -> bool:
        return self._done

    def _rel(self, x):
        L = self.config.road_length
        return (x - self.ego_x + L / 2) % L - L / 2

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise EnvContractError("step() called on a finished episode; call reset()")
        if not 0 <= action < self.n_actions:
            raise EnvContractError(f"invalid action {action}")
        c = self.config
        self.ego_vy = 0.0
        if action == LANE_LEFT and self.ego_lane > 0:
            self.ego_lane -= 1
            self.ego_vy = -1.0
        elif action == LANE_RIGHT and self.ego_lane < c.lanes - 1:
            self.ego_lane += 1
            self.ego_vy = 1.0
        elif action == FASTER:
            self.ego_speed = min(self.ego_speed + 1, len(SPEEDS) - 1)
        elif action == SLOWER:
            self.ego_speed = max(self.ego_speed - 1, 0)
        v = SPEEDS[self.ego_speed]
        # traffic keeps its lane and slows behind a close leader
        L = c.road_length
        gap = (self.tx[None, :] - self.tx[:, None]) % L
        gap[(self.tlane[None, :] != self.tlane[:, None]) | (gap == 0)] = np.inf
        if len(self.tx) > 1:
            lead = np.argmin(gap, axis=1)
            close = gap[np.arange(len(lead)), lead] < 12.0
            self.tspeed = np.where(close, np.minimum(self.tspeed, self.tspeed[lead]), self.tspeed)
        old_rel = self._rel(self.tx)
        self.tx = (self.tx + self.tspeed) % c.road_length
        self.ego_x = (self.ego_x + v) % c.road_length
        new_rel = self._rel(self.tx)
        same_lane = self.tlane == self.ego_lane
        # overlap now, or passed through each other during the step
        hit = same_lane & ((np.abs(new_rel) < c.vehicle_length)
                           | ((np.sign(old_rel) != np.sign(new_rel)) & (np.abs(old_rel) < 40.0)))
        self.steps += 1
        if hit.any():
            self.crashed = True
            self._done = True
            return self.observe(), -c.collision_penalty, True
        reward = 1.0 + c.speed_bonus * self.ego_speed
        if self.steps >= c.max_steps:
            self._done = True
            self.truncated = True
        return self.observe(), reward, self._done

    def observe(self) -> np.ndarray:
        c = self.config
        obs = np.zeros((N_VEHICLES, len(PROPS)))
        v = SPEEDS[self.ego_speed]
        obs[0] = (1.0, 0.0, float(self.ego_lane), v / SPEEDS[-1], self.ego_vy, 1.0, 0.1 * self.ego_vy)
        rel = self._rel(self.tx)
        near = np.flatnonzero(np.abs(rel) <= c.sensing_range)
        near = near[np.argsort(np.abs(rel[near]), kind="stable")][: N_VEHICLES - 1]
        for k, i in enumerate(near, start=1):
            obs[k] = (1.0, rel[i] / c.sensing_range, float(self.tlane[i] - self.ego_lane),
                      (self.tspeed[i] - v) / SPEEDS[-1], 0.0, 1.0, 0.0)
        return obs.ravel()


def mirror_spec_text(scheme, samples, lanes: int = 3) -> str:
    """MR DSL text for the left/right mirror symmetry under ``scheme``.

    Lane-left and lane-right swap; lateral positions, lateral speeds and
    heading sines change sign (ego lane ``y`` maps to ``lanes - 1 - y``).
    The interval map of each such feature is read off the observed
    ``samples``: interval ``i`` maps to ``j`` when every sampled value in
    ``i`` reflects into ``j``.  Intervals without a unique image are left
    out, so rules conditioned on them do not generalize.
    """
    X = np.asarray(samples, float)
    out = []
    for a, b in ((LANE_LEFT, LANE_RIGHT), (LANE_RIGHT, LANE_LEFT)):
        out.append(f"mr mirror_{a}_{b} {{")
        out.append(f"    actions {a} -> {b};")
        for k in range(N_VEHICLES):
            for p in ("y", "vy", "sin_h"):
                f = feature_index(k, p)
                col = X[:, f]
                img = (lanes - 1) - col if (k == 0 and p == "y") else -col
                iv = scheme.intervals[f]
                src = np.array([iv.interval_of(x) for x in col])
                dst = np.array([iv.interval_of(x) for x in img])
                pairs = []
                for i in range(iv.n_intervals):
                    js = np.unique(dst[src == i])
                    if len(js) == 1:
                        pairs.append((i, int(js[0])))
                if pairs:
                    lit = ", ".join(f"{i}:{j}" for i, j in pairs)
                    out.append(f"    map {f} -> {f} {{{lit}}};")
        out.append("}")
    return "\n".join(out) + "\n"
