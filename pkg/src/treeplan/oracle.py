"""Independent ground-truth checks: brute-force BFS, a literal recursive
transcription of the tree returns, exhaustive plan-depth search, and
randomized operator contraction trials.

Nothing here shares computation with the modules it checks. The return
oracle is a direct top-down recursion; the plan-depth oracle is a
boolean reachability power iteration; the BFS here is written against
the raw step function.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .envs import Task
from .returns import ReturnConfig, TreeMdp, bellman_operator
from .tree import TreeTrajectory


def bfs_distance(env, from_state: int, to_state: int) -> Optional[int]:
    """Exact action-count distance by plain breadth-first search over the
    step function; None when to_state is unreachable."""
    if from_state == to_state:
        return 0
    dist = {from_state: 0}
    q = deque([from_state])
    while q:
        s = q.popleft()
        for a in range(env.n_actions):
            t = env.step(s, a)
            if t not in dist:
                dist[t] = dist[s] + 1
                if t == to_state:
                    return dist[t]
                q.append(t)
    return None


def oracle_tree_return(tree: TreeTrajectory, values, cfg: ReturnConfig,
                       kind: str) -> np.ndarray:
    """Recompute tree returns by direct recursion on the definitions.
    kind is 'mc', 'one_step' or 'lambda'; values is a Task -> float
    callable (ignored for 'mc', which gives truncated leaves 0)."""
    if kind not in ("mc", "one_step", "lambda"):
        raise ValueError(f"unknown return kind {kind!r}")
    n = tree.n_nodes

    def value_of(i: int) -> float:
        if tree.terminal[i] or values is None:
            return 0.0
        return float(values(tree.nodes[i]))

    def rec(i: int) -> float:
        if tree.terminal[i]:
            return 0.0
        if i >= tree.n_internal:
            return 0.0 if kind == "mc" else value_of(i)
        left, right = 2 * i + 1, 2 * i + 2
        if kind == "mc":
            lhs = tree.rewards[left] + cfg.gamma * rec(left)
            rhs = tree.rewards[right] + cfg.gamma * rec(right)
        elif kind == "one_step":
            lhs = tree.rewards[left] + cfg.gamma * value_of(left)
            rhs = tree.rewards[right] + cfg.gamma * value_of(right)
        else:
            lhs = tree.rewards[left] + cfg.gamma * (
                (1 - cfg.lam) * value_of(left) + cfg.lam * rec(left))
            rhs = tree.rewards[right] + cfg.gamma * (
                (1 - cfg.lam) * value_of(right) + cfg.lam * rec(right))
        return min(lhs, rhs)

    return np.array([rec(i) for i in range(n)], dtype=np.float64)


def _adjacency_within(env, k_reach: int) -> np.ndarray:
    """Boolean matrix M[a, b] = (BFS distance from a to b) <= k_reach."""
    n = env.n_states
    hop = np.zeros((n, n), dtype=bool)
    for s in range(n):
        hop[s, s] = True
        for a in range(env.n_actions):
            hop[s, env.step(s, a)] = True
    within = np.eye(n, dtype=bool)
    for _ in range(k_reach):
        within = within @ hop
    return within


def optimal_plan_depth(env, task: Task, k_reach: int,
                       max_depth: int = 32) -> int:
    """Minimum tree depth that admits a plan whose every branch ends in a
    task solvable within k_reach actions.

    Exhaustive: squares the k_reach-reachability relation, since a depth
    D plan exists for (a, b) exactly when some midpoint splits it into
    two depth D - 1 plans. Raises when the goal is unreachable.
    """
    if bfs_distance(env, task.init, task.goal) is None:
        raise ValueError(f"goal {task.goal} unreachable from {task.init}")
    reach = _adjacency_within(env, k_reach)
    depth = 0
    while not reach[task.init, task.goal]:
        nxt = reach @ reach
        if np.array_equal(nxt, reach):
            raise ValueError("plan depth search saturated without success")
        reach = nxt
        depth += 1
        if depth > max_depth:
            raise ValueError(f"no plan within depth {max_depth}")
    return depth


def plan_depth_closed_form(env, task: Task, k_reach: int) -> int:
    """ceil(log2(ceil(distance / k_reach))): segments of length k_reach
    along a shortest path, halved until single segments remain."""
    d = bfs_distance(env, task.init, task.goal)
    if d is None:
        raise ValueError(f"goal {task.goal} unreachable from {task.init}")
    if d <= k_reach:
        return 0
    segments = math.ceil(d / k_reach)
    return math.ceil(math.log2(segments))


def random_tree_trajectory(rng: np.random.Generator, depth: int,
                           n_states: int = 50,
                           p_terminal: float = 0.25) -> TreeTrajectory:
    """Random complete tree for estimator cross-checks: arbitrary int task
    pairs, terminal flags closed under descent, rewards uniform in [0, 1]."""
    n = 2 ** (depth + 1) - 1
    nodes = [Task(int(rng.integers(n_states)), int(rng.integers(n_states)))
             for _ in range(n)]
    term = np.zeros(n, dtype=bool)
    for i in range(n):
        inherited = i > 0 and term[(i - 1) // 2]
        term[i] = inherited or (rng.random() < p_terminal)
    return TreeTrajectory(
        depth=depth,
        nodes=nodes,
        terminal=term,
        rewards=rng.random(n),
        subgoal_choices=np.full(n, -1, dtype=np.int64),
        log_probs=np.zeros(n, dtype=np.float64),
    )


def random_tree_mdp(rng: np.random.Generator, max_depth: int = 4,
                    max_width: int = 12, max_actions: int = 3,
                    p_terminal: float = 0.2) -> TreeMdp:
    """Random layered TreeMdp for operator checks. Children always sit one
    layer deeper (acyclic), bottom-layer states are all terminal so the
    lambda operator's stated modulus is exact, and terminal status is
    inherited along every edge."""
    depth = int(rng.integers(1, max_depth + 1))
    widths = [1]
    for _ in range(depth):
        widths.append(int(rng.integers(1, min(2 * widths[-1], max_width) + 1)))
    offsets = np.cumsum([0] + widths)
    n = int(offsets[-1])
    terminal = np.zeros(n, dtype=bool)
    actions: List[Tuple] = [() for _ in range(n)]
    for s in range(offsets[-2], n):
        terminal[s] = True
    # Terminal states carry no actions, so terminal status is closed under
    # descent by construction (a terminal state has no descendants).
    for level in range(depth):
        for s in range(offsets[level], offsets[level + 1]):
            if terminal[s] or rng.random() < p_terminal:
                terminal[s] = True
                continue
            m = int(rng.integers(1, max_actions + 1))
            raw = rng.random(m) + 1e-3
            probs = raw / raw.sum()
            acts = []
            lo, hi = int(offsets[level + 1]), int(offsets[level + 2])
            for j in range(m):
                left = int(rng.integers(lo, hi))
                right = int(rng.integers(lo, hi))
                acts.append((float(probs[j]), float(rng.integers(2)), left,
                             float(rng.integers(2)), right))
            actions[s] = tuple(acts)
    return TreeMdp(n_states=n, terminal=terminal, actions=actions)


@dataclass
class ContractionReport:
    trials: int
    bound_one_step: float
    bound_lambda: float
    max_ratio_one_step: float
    max_ratio_lambda: float
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def contraction_check(cfg: ReturnConfig, trials: int,
                      rng: np.random.Generator,
                      counterexample_path: Optional[str] = None,
                      operator=bellman_operator) -> ContractionReport:
    """Randomized check of the operator moduli: gamma for the one-step
    backup and gamma (1 - lam) / (1 - gamma lam) for the lambda backup.
    Any trial exceeding its bound counts as a violation and, when a path
    is given, the first counterexample is serialized there as JSON. The
    operator argument exists so tests can prove the detector fires on a
    deliberately broken backup."""
    bound0 = cfg.gamma
    boundl = cfg.gamma * (1 - cfg.lam) / (1 - cfg.gamma * cfg.lam)
    max0 = 0.0
    maxl = 0.0
    violations = 0
    tol = 1e-12
    for _ in range(trials):
        mdp = random_tree_mdp(rng)
        v1 = rng.uniform(-1.0, 1.0, size=mdp.n_states)
        v2 = rng.uniform(-1.0, 1.0, size=mdp.n_states)
        denom = float(np.max(np.abs(v1 - v2)))
        if denom < 1e-9:
            continue
        r0 = float(np.max(np.abs(operator("one_step", mdp, v1, cfg) -
                                 operator("one_step", mdp, v2, cfg)))) / denom
        rl = float(np.max(np.abs(operator("lambda", mdp, v1, cfg) -
                                 operator("lambda", mdp, v2, cfg)))) / denom
        max0 = max(max0, r0)
        maxl = max(maxl, rl)
        if r0 > bound0 + tol or rl > boundl + tol:
            violations += 1
            if counterexample_path is not None and violations == 1:
                blob = {
                    "ratio_one_step": r0, "ratio_lambda": rl,
                    "bound_one_step": bound0, "bound_lambda": boundl,
                    "terminal": [bool(t) for t in mdp.terminal],
                    "actions": [[list(a) for a in acts] for acts in mdp.actions],
                    "v1": v1.tolist(), "v2": v2.tolist(),
                }
                with open(counterexample_path, "w", encoding="utf-8") as fh:
                    json.dump(blob, fh)
    return ContractionReport(trials=trials, bound_one_step=bound0,
                             bound_lambda=boundl, max_ratio_one_step=max0,
                             max_ratio_lambda=maxl, violations=violations)


def fixed_point_iterations(mdp: TreeMdp, cfg: ReturnConfig,
                           tol: float = 1e-8, max_iters: int = 10_000
                           ) -> Tuple[np.ndarray, int]:
    """Iterate the one-step backup from V = 0 and return (fixed point, n)
    where n indexes the first residual ||V_{n+1} - V_n|| <= tol. Starting
    from zero keeps the initial residual at most 1, so n never exceeds
    ceil(log(tol) / log(gamma))."""
    v = np.zeros(mdp.n_states, dtype=np.float64)
    for n in range(max_iters):
        nxt = bellman_operator("one_step", mdp, v, cfg)
        if float(np.max(np.abs(nxt - v))) <= tol:
            return nxt, n
        v = nxt
    raise ValueError(f"no fixed point within {max_iters} iterations")


def min_lemma_check(n_quadruples: int, rng: np.random.Generator,
                    scale: float = 10.0) -> float:
    """Largest excess of |min(a,b) - min(c,d)| over max(|a-c|, |b-d|)
    across random quadruples; nonpositive means the lemma held."""
    a, b, c, d = rng.uniform(-scale, scale, size=(4, n_quadruples))
    lhs = np.abs(np.minimum(a, b) - np.minimum(c, d))
    rhs = np.maximum(np.abs(a - c), np.abs(b - d))
    return float(np.max(lhs - rhs))


def enumerate_tree_shapes(n_leaves: int):
    """All full binary tree shapes with the given number of leaves, as
    nested tuples: a leaf is None, an internal node is (left, right)."""
    if n_leaves < 1:
        raise ValueError("need at least one leaf")
    if n_leaves == 1:
        return [None]
    shapes = []
    for k in range(1, n_leaves):
        for left in enumerate_tree_shapes(k):
            for right in enumerate_tree_shapes(n_leaves - k):
                shapes.append((left, right))
    return shapes


def shape_height(shape) -> int:
    if shape is None:
        return 0
    return 1 + max(shape_height(shape[0]), shape_height(shape[1]))


def shape_to_tree(shape, depth: int) -> TreeTrajectory:
    """Embed a shape into a complete tree of the given depth: shape leaves
    become terminal nodes with unit reward, everything below them stays
    terminal by inheritance, internal shape nodes are non-terminal."""
    if shape_height(shape) > depth:
        raise ValueError("shape deeper than the host tree")
    n = 2 ** (depth + 1) - 1
    term = np.ones(n, dtype=bool)

    def mark(node, i):
        if node is None:
            return
        term[i] = False
        mark(node[0], 2 * i + 1)
        mark(node[1], 2 * i + 2)

    mark(shape, 0)
    dummy = Task(0, 0)
    return TreeTrajectory(
        depth=depth,
        nodes=[dummy] * n,
        terminal=term,
        rewards=term.astype(np.float64),
        subgoal_choices=np.full(n, -1, dtype=np.int64),
        log_probs=np.zeros(n, dtype=np.float64),
    )
