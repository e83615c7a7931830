"""Exact discrete environments: LightsOut boards and room mazes.

States are small integers, dynamics are deterministic, and reachability
is decided exactly by bounded breadth-first search. Everything here is
cheap enough to enumerate, which is what makes the rest of the package
checkable against brute force.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

StateId = int


@dataclass(frozen=True)
class Task:
    """A goal-reaching problem: drive the environment from init to goal."""

    init: StateId
    goal: StateId


class LightsOut:
    """L x L toggle board. Pressing cell (i, j) flips it and its orthogonal
    neighbours. A state packs the board row-major into the bits of an int,
    bit 0 = cell (0, 0), so state 0 is the all-off board.

    Pressing is an XOR with a fixed mask, hence every action is an
    involution and the dynamics commute.
    """

    kind = "lightsout"

    def __init__(self, size: int = 3):
        if size < 1:
            raise ValueError(f"board size must be positive, got {size}")
        self.size = size
        self.n_states = 1 << (size * size)
        self.n_actions = size * size
        masks = []
        for i in range(size):
            for j in range(size):
                m = 0
                for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < size and 0 <= nj < size:
                        m |= 1 << (ni * size + nj)
                masks.append(m)
        self.toggle_masks = tuple(masks)
        self._mask_set = frozenset(masks)
        self._solvable: Optional[frozenset] = None

    def is_valid_state(self, state: StateId) -> bool:
        return isinstance(state, (int, np.integer)) and 0 <= state < self.n_states

    def states(self) -> range:
        return range(self.n_states)

    def step(self, state: StateId, action: int) -> StateId:
        return state ^ self.toggle_masks[action]

    def neighbors(self, state: StateId) -> list:
        return [state ^ m for m in self.toggle_masks]

    def adjacent(self, a: StateId, b: StateId) -> bool:
        return (a ^ b) in self._mask_set

    @property
    def goal_state(self) -> StateId:
        return 0

    def solvable_set(self) -> frozenset:
        """States from which the all-off board can be reached. Actions are
        involutions, so this equals the set reachable from all-off."""
        if self._solvable is None:
            seen = {0}
            frontier = deque([0])
            while frontier:
                s = frontier.popleft()
                for n in self.neighbors(s):
                    if n not in seen:
                        seen.add(n)
                        frontier.append(n)
            self._solvable = frozenset(seen)
        return self._solvable


@dataclass(frozen=True)
class MazeLayout:
    """Connectivity of a size x size room grid. Doors are unordered pairs of
    adjacent room ids (room (r, c) has id r * size + c)."""

    size: int
    doors: tuple

    def to_json(self) -> str:
        return json.dumps({"R": self.size, "doors": [list(d) for d in self.doors]})

    @staticmethod
    def from_json(text: str) -> "MazeLayout":
        obj = json.loads(text)
        doors = tuple(sorted(tuple(sorted(d)) for d in obj["doors"]))
        return MazeLayout(size=int(obj["R"]), doors=doors)


# Action order is fixed so greedy tie-breaks are reproducible.
_MAZE_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


class RoomMaze:
    """Grid of rooms connected by doors. Moving against a wall is a self
    loop; every layout produced by generate_maze_layout is connected."""

    kind = "maze"

    def __init__(self, layout: MazeLayout):
        self.layout = layout
        self.size = layout.size
        self.n_states = layout.size * layout.size
        self.n_actions = 4
        door_set = set()
        for a, b in layout.doors:
            if not self._rooms_adjacent(a, b):
                raise ValueError(f"door {(a, b)} does not join adjacent rooms")
            door_set.add((min(a, b), max(a, b)))
        self._doors = frozenset(door_set)
        adj = {s: [] for s in range(self.n_states)}
        for a, b in sorted(door_set):
            adj[a].append(b)
            adj[b].append(a)
        self._adj = {s: tuple(sorted(ns)) for s, ns in adj.items()}

    def _rooms_adjacent(self, a: StateId, b: StateId) -> bool:
        ra, ca = divmod(a, self.size)
        rb, cb = divmod(b, self.size)
        return abs(ra - rb) + abs(ca - cb) == 1

    def is_valid_state(self, state: StateId) -> bool:
        return isinstance(state, (int, np.integer)) and 0 <= state < self.n_states

    def states(self) -> range:
        return range(self.n_states)

    def step(self, state: StateId, action: int) -> StateId:
        r, c = divmod(state, self.size)
        dr, dc = _MAZE_MOVES[action]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < self.size and 0 <= nc < self.size):
            return state
        nxt = nr * self.size + nc
        if (min(state, nxt), max(state, nxt)) in self._doors:
            return nxt
        return state

    def neighbors(self, state: StateId) -> tuple:
        return self._adj[state]

    def adjacent(self, a: StateId, b: StateId) -> bool:
        return (min(a, b), max(a, b)) in self._doors

    @property
    def corner_rooms(self) -> tuple:
        n = self.size
        return (0, n - 1, n * (n - 1), n * n - 1)


def generate_maze_layout(size: int, rng: np.random.Generator,
                         extra_doors: int = 4) -> MazeLayout:
    """Seeded random connected layout: a depth-first spanning tree over the
    room grid plus extra_doors additional doors (where available)."""
    if size < 2:
        raise ValueError(f"maze size must be at least 2, got {size}")
    n = size * size

    def room_neighbors(s):
        r, c = divmod(s, size)
        out = []
        for dr, dc in _MAZE_MOVES:
            nr, nc = r + dr, c + dc
            if 0 <= nr < size and 0 <= nc < size:
                out.append(nr * size + nc)
        return out

    doors = set()
    visited = {0}
    stack = [0]
    while stack:
        s = stack[-1]
        unvisited = [t for t in room_neighbors(s) if t not in visited]
        if not unvisited:
            stack.pop()
            continue
        t = unvisited[int(rng.integers(len(unvisited)))]
        doors.add((min(s, t), max(s, t)))
        visited.add(t)
        stack.append(t)

    candidates = sorted(
        (min(a, b), max(a, b))
        for a in range(n)
        for b in room_neighbors(a)
        if a < b and (a, b) not in doors
    )
    k = min(extra_doors, len(candidates))
    if k > 0:
        picks = rng.choice(len(candidates), size=k, replace=False)
        for idx in sorted(int(i) for i in picks):
            doors.add(candidates[idx])
    return MazeLayout(size=size, doors=tuple(sorted(doors)))


def load_maze_layout(path: str) -> MazeLayout:
    with open(path, "r", encoding="utf-8") as fh:
        return MazeLayout.from_json(fh.read())


def save_maze_layout(layout: MazeLayout, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(layout.to_json())


def default_maze(size: int = 5) -> RoomMaze:
    """Load one of the layouts shipped with the package (sizes 5 and 7)."""
    from importlib.resources import files

    res = files("treeplan.layouts").joinpath(f"maze{size}.json")
    try:
        text = res.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValueError(f"no packaged layout for size {size}") from None
    return RoomMaze(MazeLayout.from_json(text))


def reachable(env, from_state: StateId, to_state: StateId, k_reach: int) -> bool:
    """True when to_state is at most k_reach environment actions away from
    from_state, decided by exhaustive depth-limited search. k_reach = 0
    accepts only identical states."""
    if not env.is_valid_state(from_state):
        raise ValueError(f"invalid state {from_state!r} for {env.kind}")
    if not env.is_valid_state(to_state):
        raise ValueError(f"invalid state {to_state!r} for {env.kind}")
    if k_reach < 0:
        raise ValueError(f"k_reach must be nonnegative, got {k_reach}")
    from_state = int(from_state)
    to_state = int(to_state)
    if from_state == to_state:
        return True
    if k_reach >= 1 and env.adjacent(from_state, to_state):
        return True
    if k_reach <= 1:
        return False
    frontier = {from_state}
    seen = {from_state}
    for _ in range(k_reach):
        nxt = set()
        for s in frontier:
            for t in env.neighbors(s):
                if t == to_state:
                    return True
                if t not in seen:
                    seen.add(t)
                    nxt.add(t)
        if not nxt:
            return False
        frontier = nxt
    return False


class DistanceOracle:
    """Memoized shortest-path queries over an environment's step graph.

    Both environments have symmetric dynamics, so the map computed from one
    endpoint answers queries in either direction.
    """

    def __init__(self, env):
        self.env = env
        self._maps: dict = {}

    def _map(self, src: StateId) -> dict:
        src = int(src)
        m = self._maps.get(src)
        if m is None:
            m = _distance_map(self.env, src)
            self._maps[src] = m
        return m

    def distance(self, a: StateId, b: StateId) -> Optional[int]:
        """Step count from a to b, or None when unreachable."""
        return self._map(b).get(int(a))

    def greedy_step(self, state: StateId, goal: StateId) -> int:
        """Action whose successor is closest to the goal, lowest index on
        ties. Unreachable successors rank last."""
        dist = self._map(goal)
        best_action, best = 0, None
        for a in range(self.env.n_actions):
            d = dist.get(int(self.env.step(state, a)))
            if d is not None and (best is None or d < best):
                best_action, best = a, d
        return best_action


def _distance_map(env, src: StateId) -> dict:
    dist = {int(src): 0}
    frontier = deque([int(src)])
    while frontier:
        s = frontier.popleft()
        for t in env.neighbors(s):
            if t not in dist:
                dist[t] = dist[s] + 1
                frontier.append(t)
    return dist


def sample_task(env, rng: np.random.Generator, constraint: str = "any",
                d: int = 0, max_tries: int = 10_000) -> Task:
    """Draw a uniformly random task subject to a constraint.

    Constraints:
      any          -- independent uniform init and goal.
      solvable     -- goal is reachable from init. On LightsOut the goal is
                      pinned to the all-off board and init is drawn from its
                      solvable set.
      min_distance -- BFS distance from init to goal is at least d.
    """
    if constraint == "any":
        init = int(rng.integers(env.n_states))
        goal = int(rng.integers(env.n_states))
        return Task(init, goal)
    if constraint == "solvable":
        if env.kind == "lightsout":
            solvable = sorted(env.solvable_set())
            init = solvable[int(rng.integers(len(solvable)))]
            return Task(init, env.goal_state)
        for _ in range(max_tries):
            init = int(rng.integers(env.n_states))
            goal = int(rng.integers(env.n_states))
            if goal in _distance_map(env, init):
                return Task(init, goal)
        raise ValueError("could not sample a solvable task")
    if constraint == "min_distance":
        for _ in range(max_tries):
            init = int(rng.integers(env.n_states))
            goal = int(rng.integers(env.n_states))
            dist = _distance_map(env, init)
            if goal in dist and dist[goal] >= d:
                return Task(init, goal)
        raise ValueError(f"no task with BFS distance >= {d}")
    raise ValueError(f"unknown constraint {constraint!r}")
