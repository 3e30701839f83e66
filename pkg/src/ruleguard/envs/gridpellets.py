"""PAC-Man-style grid environment with a 69-feature observation.

Layouts are ASCII grids: ``%`` wall, ``.`` pellet, ``o`` capsule, ``P`` agent,
``G`` ghost (at most two), space for an empty cell.

Actions: 0 north, 1 south, 2 east, 3 west, 4 stop.

Feature layout (index: meaning).  Direction one-hots are ordered N, S, E, W;
angle one-hots are 45-degree sectors starting at north, clockwise.

    0       pellets remaining (fraction of initial)
    1       capsules remaining (fraction of initial)
    2-5     direction (first move on a shortest path) to the closest capsule
    6       maze distance to closest capsule (normalized)
    7       maze distance to closest pellet (normalized)
    8       number of pellets on neighbouring cells / 4
    9-12    direction to the closest pellet
    13      maze distance to the closest non-scared ghost (normalized)
    14-37   ghost 0 block, 38-61 ghost 1 block; offsets within a block:
              +0 maze distance, +1..+8 angle, +9..+12 direction,
              +13 scared flag, +14 scared time left (fraction),
              +15..+18 heading (last move), +19 Manhattan distance,
              +20 adjacent flag, +21 present flag, +22/+23 x, y
    62-65   move possible north / south / east / west (1 = no wall)
    66      any ghost scared
    67, 68  agent x, y

All features lie in [0, 1].
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..featurespace import CATEGORICAL, NUMERIC, FeatureSchema
from ..seeding import derive_rng
from .base import EnvContractError

NORTH, SOUTH, EAST, WEST, STOP = range(5)
DIRS = ("N", "S", "E", "W")
# (drow, dcol) per direction; north is up in the ASCII grid
DELTAS = ((-1, 0), (1, 0), (0, 1), (0, -1))
ANGLES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")

N_FEATURES = 69
GHOST_BASES = (14, 38)
WALL_FEATURES = (62, 63, 64, 65)
COORD_FEATURES = (67, 68, 36, 37, 60, 61)

DEFAULT_REWARDS = {
    "pellet": 10.0,
    "ghost-eaten": 200.0,
    "level-complete": 500.0,
    "death": -500.0,
    "step": -1.0,
}


def _ghost_specs(g: int) -> list[tuple]:
    p = f"g{g}_"
    specs = [(p + "dist", NUMERIC)]
    specs += [(p + "angle_" + a, CATEGORICAL, p + "angle") for a in ANGLES]
    specs += [(p + "dir_" + d, CATEGORICAL, p + "dir") for d in DIRS]
    specs += [(p + "scared", CATEGORICAL), (p + "scared_time", NUMERIC)]
    specs += [(p + "heading_" + d, CATEGORICAL, p + "heading") for d in DIRS]
    specs += [(p + "manhattan", NUMERIC), (p + "adjacent", CATEGORICAL),
              (p + "present", CATEGORICAL), (p + "x", NUMERIC), (p + "y", NUMERIC)]
    return specs


def grid_schema() -> FeatureSchema:
    specs = [("pellets_left", NUMERIC), ("capsules_left", NUMERIC)]
    specs += [("capsule_dir_" + d, CATEGORICAL, "capsule_dir") for d in DIRS]
    specs += [("capsule_dist", NUMERIC), ("food_dist", NUMERIC), ("food_adjacent", NUMERIC)]
    specs += [("food_dir_" + d, CATEGORICAL, "food_dir") for d in DIRS]
    specs += [("threat_dist", NUMERIC)]
    specs += _ghost_specs(0) + _ghost_specs(1)
    specs += [("can_move_" + d, CATEGORICAL) for d in DIRS]
    specs += [("any_scared", CATEGORICAL), ("x", NUMERIC), ("y", NUMERIC)]
    schema = FeatureSchema.from_specs(specs)
    assert len(schema) == N_FEATURES
    return schema


# named index sets, e.g. for rule-feature statistics
FEATURE_GROUPS = {
    "ghosts": [i for b in GHOST_BASES for i in range(b, b + 24)] + [13, 66],
    "scared": [b + 13 for b in GHOST_BASES] + [b + 14 for b in GHOST_BASES] + [66],
    "walls": list(WALL_FEATURES),
    "food": [0, 7, 8, 9, 10, 11, 12],
    "capsules": [1, 2, 3, 4, 5, 6],
    "coordinates": list(COORD_FEATURES),
}


@dataclass(frozen=True)
class Layout:
    walls: np.ndarray  # bool (H, W)
    pellets: tuple[tuple[int, int], ...]
    capsules: tuple[tuple[int, int], ...]
    agent: tuple[int, int]
    ghosts: tuple[tuple[int, int], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape


def parse_layout(text: str) -> Layout:
    lines = [ln.rstrip("\n") for ln in text.strip("\n").splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty layout")
    width = max(len(ln) for ln in lines)
    walls = np.zeros((len(lines), width), dtype=bool)
    pellets, capsules, ghosts, agents = [], [], [], []
    for r, ln in enumerate(lines):
        for c in range(width):
            ch = ln[c] if c < len(ln) else "%"
            if ch == "%":
                walls[r, c] = True
            elif ch == ".":
                pellets.append((r, c))
            elif ch == "o":
                capsules.append((r, c))
            elif ch == "P":
                agents.append((r, c))
            elif ch == "G":
                ghosts.append((r, c))
            elif ch != " ":
                raise ValueError(f"unknown layout character {ch!r} at row {r}, column {c}")
    if len(agents) != 1:
        raise ValueError("layout must contain exactly one agent 'P'")
    if len(ghosts) > 2:
        raise ValueError("at most two ghosts are supported")
    return Layout(walls, tuple(pellets), tuple(capsules), agents[0], tuple(ghosts))


def load_layout(name: str) -> Layout:
    """Load a bundled layout by name (``tiny``, ``small``, ``smallnc``, ``medium``,
    ``corridor``) or a layout file by path."""
    try:
        text = resources.files("ruleguard.envs.layouts").joinpath(f"{name}.lay").read_text()
    except FileNotFoundError:
        with open(name) as fh:
            text = fh.read()
    return parse_layout(text)


@dataclass
class GridPelletsConfig:
    layout: Layout
    ghost_noise: float = 0.2
    scared_duration: int = 40
    max_steps: int = 400
    rewards: dict = field(default_factory=lambda: dict(DEFAULT_REWARDS))

    def __post_init__(self):
        if self.layout.walls[self.layout.agent]:
            raise ValueError("agent start cell is a wall")
        if set(self.rewards) != set(DEFAULT_REWARDS):
            raise ValueError(f"reward table keys must be {sorted(DEFAULT_REWARDS)}")
        if not 0.0 <= self.ghost_noise <= 1.0:
            raise ValueError("ghost_noise must be in [0, 1]")


class _Maze:
    """Static maze structure: open-cell indexing, neighbours, all-pairs BFS."""

    def __init__(self, walls: np.ndarray):
        self.walls = walls
        H, W = walls.shape
        self.cells = [(r, c) for r in range(H) for c in range(W) if not walls[r, c]]
        self.index = {rc: i for i, rc in enumerate(self.cells)}
        n = len(self.cells)
        self.nbr = np.full((n, 4), -1, dtype=np.int64)
        for i, (r, c) in enumerate(self.cells):
            for d, (dr, dc) in enumerate(DELTAS):
                rc = (r + dr, c + dc)
                if 0 <= rc[0] < H and 0 <= rc[1] < W and not walls[rc]:
                    self.nbr[i, d] = self.index[rc]
        unreachable = n * 4 + 1
        self.dist = np.full((n, n), unreachable, dtype=np.int64)
        for s in range(n):
            self.dist[s, s] = 0
            dq = deque([s])
            while dq:
                u = dq.popleft()
                for v in self.nbr[u]:
                    if v >= 0 and self.dist[s, v] == unreachable:
                        self.dist[s, v] = self.dist[s, u] + 1
                        dq.append(v)
        finite = self.dist[self.dist < unreachable]
        self.max_dist = max(1, int(finite.max()))
        self.unreachable = unreachable
        # first move from u on a shortest path to v (N, S, E, W priority)
        self.first_move = np.full((n, n), -1, dtype=np.int64)
        for u in range(n):
            for d in range(4):
                v = self.nbr[u, d]
                if v < 0:
                    continue
                ok = (self.dist[v] == self.dist[u] - 1) & (self.first_move[u] < 0)
                self.first_move[u, ok] = d
        self.rows = np.array([rc[0] for rc in self.cells])
        self.cols = np.array([rc[1] for rc in self.cells])


class GridPellets:
    n_actions = 5

    def __init__(self, config: GridPelletsConfig | None = None, layout: str | Layout = "small", **kw):
        if config is None:
            lay = load_layout(layout) if isinstance(layout, str) else layout
            config = GridPelletsConfig(lay, **kw)
        self.config = config
        self.layout = config.layout
        self.maze = _Maze(config.layout.walls)
        self.schema = grid_schema()
        self.max_steps = config.max_steps
        H, W = self.layout.shape
        self._xnorm = max(1, W - 1)
        self._ynorm = max(1, H - 1)
        self._ghost_home = [self.maze.index[g] for g in self.layout.ghosts]
        self._n_pellets0 = max(1, len(self.layout.pellets))
        self._n_caps0 = max(1, len(self.layout.capsules))
        self._done = True
        self._rng = None
        self.truncated = False

    # -- simulator state ------------------------------------------------
    def reset(self, seed: int = 0) -> np.ndarray:
        self._rng = derive_rng(seed, "env")
        m = self.maze
        self.agent = m.index[self.layout.agent]
        self.ghost_pos = list(self._ghost_home)
        self.ghost_scared = [0] * len(self.ghost_pos)
        self.ghost_heading = [-1] * len(self.ghost_pos)
        self.pellets = np.zeros(len(m.cells), dtype=bool)
        for rc in self.layout.pellets:
            self.pellets[m.index[rc]] = True
        self.capsules = np.zeros(len(m.cells), dtype=bool)
        for rc in self.layout.capsules:
            self.capsules[m.index[rc]] = True
        self.steps = 0
        self._done = False
        self.truncated = False
        self.won = False
        self.died = False
        return self.observe()

    @property
    def done(self) -> bool:
        return self._done

    def agent_rc(self) -> tuple[int, int]:
        return self.maze.cells[self.agent]

    def wall_at(self, rc) -> bool:
        H, W = self.layout.shape
        r, c = rc
        return not (0 <= r < H and 0 <= c < W) or bool(self.layout.walls[r, c])

    def _collide(self, rew: dict) -> float:
        r = 0.0
        for g, pos in enumerate(self.ghost_pos):
            if pos != self.agent:
                continue
            if self.ghost_scared[g] > 0:
                r += rew["ghost-eaten"]
                self.ghost_pos[g] = self._ghost_home[g]
                self.ghost_scared[g] = 0
                self.ghost_heading[g] = -1
            else:
                r += rew["death"]
                self._done = True
                self.died = True
                return r
        return r

    def _move_ghosts(self) -> None:
        m = self.maze
        ar, ac = m.cells[self.agent]
        for g, pos in enumerate(self.ghost_pos):
            moves = [d for d in range(4) if m.nbr[pos, d] >= 0]
            if not moves:
                continue
            if self._rng.random() < self.config.ghost_noise:
                d = moves[int(self._rng.integers(len(moves)))]
            else:
                sign = -1 if self.ghost_scared[g] > 0 else 1
                best = None
                for mv in moves:
                    r, c = m.cells[m.nbr[pos, mv]]
                    score = sign * (abs(r - ar) + abs(c - ac))
                    if best is None or score < best[0]:
                        best = (score, mv)
                d = best[1]
            self.ghost_pos[g] = int(m.nbr[pos, d])
            self.ghost_heading[g] = d

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise EnvContractError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < 5:
            raise ValueError(f"invalid action {action}")
        rew = self.config.rewards
        m = self.maze
        reward = rew["step"]
        prev = self.agent
        if action < 4 and m.nbr[prev, action] >= 0:
            self.agent = int(m.nbr[prev, action])
        if self.pellets[self.agent]:
            self.pellets[self.agent] = False
            reward += rew["pellet"]
        if self.capsules[self.agent]:
            self.capsules[self.agent] = False
            self.ghost_scared = [self.config.scared_duration] * len(self.ghost_pos)
        reward += self._collide(rew)
        if not self._done and not self.pellets.any():
            reward += rew["level-complete"]
            self._done = True
            self.won = True
        if not self._done:
            self._move_ghosts()
            reward += self._collide(rew)
            self.ghost_scared = [max(0, t - 1) for t in self.ghost_scared]
        self.steps += 1
        if not self._done and self.steps >= self.max_steps:
            self._done = True
            self.truncated = True
        return self.observe(), reward, self._done

    # -- features ---------------------------------------------------------
    def observe(self) -> np.ndarray:
        m = self.maze
        f = np.zeros(N_FEATURES)
        a = self.agent
        dist_a = m.dist[a]
        md = float(m.max_dist)
        f[0] = self.pellets.sum() / self._n_pellets0
        f[1] = self.capsules.sum() / self._n_caps0
        caps = np.flatnonzero(self.capsules)
        if len(caps):
            c = caps[np.argmin(dist_a[caps])]
            if dist_a[c] < m.unreachable:
                if m.first_move[a, c] >= 0:
                    f[2 + m.first_move[a, c]] = 1.0
                f[6] = dist_a[c] / md
            else:
                f[6] = 1.0
        else:
            f[6] = 1.0
        pel = np.flatnonzero(self.pellets)
        if len(pel):
            p = pel[np.argmin(dist_a[pel])]
            if dist_a[p] < m.unreachable:
                if m.first_move[a, p] >= 0:
                    f[9 + m.first_move[a, p]] = 1.0
                f[7] = dist_a[p] / md
            else:
                f[7] = 1.0
        else:
            f[7] = 1.0
        nb = m.nbr[a]
        f[8] = sum(1 for v in nb if v >= 0 and self.pellets[v]) / 4.0
        ar, ac = m.cells[a]
        threat = 1.0
        H, W = self.layout.shape
        for g, pos in enumerate(self.ghost_pos):
            b = GHOST_BASES[g]
            d = dist_a[pos]
            dn = min(1.0, d / md)
            f[b] = dn
            gr, gc = m.cells[pos]
            dx, dy = gc - ac, ar - gr
            if dx or dy:
                theta = math.degrees(math.atan2(dx, dy))
                f[b + 1 + int(round(theta / 45.0)) % 8] = 1.0
            fm = m.first_move[a, pos]
            if fm >= 0:
                f[b + 9 + fm] = 1.0
            scared = self.ghost_scared[g]
            f[b + 13] = 1.0 if scared > 0 else 0.0
            f[b + 14] = scared / max(1, self.config.scared_duration)
            if self.ghost_heading[g] >= 0:
                f[b + 15 + self.ghost_heading[g]] = 1.0
            f[b + 19] = (abs(dx) + abs(dy)) / (H + W)
            f[b + 20] = 1.0 if d <= 1 else 0.0
            f[b + 21] = 1.0
            f[b + 22] = gc / self._xnorm
            f[b + 23] = (H - 1 - gr) / self._ynorm
            if scared == 0:
                threat = min(threat, dn)
        f[13] = threat
        for d in range(4):
            f[62 + d] = 1.0 if nb[d] >= 0 else 0.0
        f[66] = 1.0 if any(t > 0 for t in self.ghost_scared) else 0.0
        f[67] = ac / self._xnorm
        f[68] = (H - 1 - ar) / self._ynorm
        return f

    def render(self) -> str:
        H, W = self.layout.shape
        rows = [["%" if self.layout.walls[r, c] else " " for c in range(W)] for r in range(H)]
        for i in np.flatnonzero(self.pellets):
            r, c = self.maze.cells[i]
            rows[r][c] = "."
        for i in np.flatnonzero(self.capsules):
            r, c = self.maze.cells[i]
            rows[r][c] = "o"
        for g, pos in enumerate(self.ghost_pos):
            r, c = self.maze.cells[pos]
            rows[r][c] = "g" if self.ghost_scared[g] else "G"
        r, c = self.maze.cells[self.agent]
        rows[r][c] = "P"
        return "\n".join("".join(row) for row in rows)
