"""Subtask trees: recursive decomposition of a task into subgoal pairs.

A plan is a dense binary tree stored in level order. Node 0 holds the
root task, node i has children 2i + 1 and 2i + 2, and splitting a task
(init, goal) with subgoal w yields the children (init, w) and (w, goal).
A node is terminal once its own task is solvable by the worker in at
most k_reach actions, or once any ancestor already was; terminal status
earns the node its unit reward and masks everything below it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .envs import Task, reachable


@dataclass(frozen=True)
class SubgoalChoice:
    """One draw from the planner head: the chosen subgoal state, its index
    in the policy's candidate list, and the log probability of the draw."""

    state: int
    index: int
    log_prob: float


@dataclass
class TreeTrajectory:
    """Dense level-order plan of a given depth (2 ** (depth + 1) - 1 nodes).

    subgoal_choices[i] is the candidate index sampled at internal node i
    (-1 at leaves), log_probs[i] the matching log probability. terminal,
    rewards and returns are filled by mark_terminal and the return
    estimators; returns stays None until one of those runs.
    """

    depth: int
    nodes: List[Task]
    terminal: np.ndarray
    rewards: np.ndarray
    subgoal_choices: np.ndarray
    log_probs: np.ndarray
    returns: Optional[np.ndarray] = None

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.depth + 1) - 1

    @property
    def n_internal(self) -> int:
        return 2 ** self.depth - 1

    def is_internal(self, i: int) -> bool:
        return i < self.n_internal

    def to_json_dict(self) -> dict:
        return {
            "depth": self.depth,
            "nodes": [[t.init, t.goal] for t in self.nodes],
            "terminal": [bool(b) for b in self.terminal],
            "rewards": [float(r) for r in self.rewards],
            "returns": None if self.returns is None
                       else [float(g) for g in self.returns],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


@dataclass
class SubgoalStack:
    """Inference-time plan: subgoals in discovery order, starting with the
    task goal and ending at the first subgoal the worker can reach. The
    complete flag is False when the depth budget ran out first."""

    subgoals: List[int]
    complete: bool

    @property
    def n_policy_calls(self) -> int:
        return len(self.subgoals) - 1


def parent_index(i: int) -> int:
    return (i - 1) // 2


def child_indices(i: int) -> tuple:
    return 2 * i + 1, 2 * i + 2


def unroll_training_tree(policy, task: Task, depth: int,
                         rng: np.random.Generator) -> TreeTrajectory:
    """Build a full plan of the given depth by sampling one subgoal per
    internal node. Terminal structure is not known yet (marking needs the
    environment), so every internal node is expanded and losses later mask
    the nodes below terminals.
    """
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth}")
    n_nodes = 2 ** (depth + 1) - 1
    n_internal = 2 ** depth - 1
    nodes: List[Optional[Task]] = [None] * n_nodes
    nodes[0] = task
    choices = np.full(n_nodes, -1, dtype=np.int64)
    log_probs = np.zeros(n_nodes, dtype=np.float64)
    for i in range(n_internal):
        node = nodes[i]
        pick = policy.sample(node, rng)
        choices[i] = pick.index
        log_probs[i] = pick.log_prob
        nodes[2 * i + 1] = Task(node.init, pick.state)
        nodes[2 * i + 2] = Task(pick.state, node.goal)
    return TreeTrajectory(
        depth=depth,
        nodes=nodes,
        terminal=np.zeros(n_nodes, dtype=bool),
        rewards=np.zeros(n_nodes, dtype=np.float64),
        subgoal_choices=choices,
        log_probs=log_probs,
    )


def mark_terminal(tree: TreeTrajectory, env, k_reach: int) -> TreeTrajectory:
    """Fill terminal flags and unit rewards in place.

    A node is terminal when its parent is, or when its goal is reachable
    from its init within k_reach actions (a task with init == goal is
    always terminal). Terminal nodes get reward 1, all others 0.
    """
    n = tree.n_nodes
    term = tree.terminal
    for i in range(n):
        node = tree.nodes[i]
        inherited = i > 0 and term[parent_index(i)]
        term[i] = inherited or reachable(env, node.init, node.goal, k_reach)
    tree.rewards[:] = term.astype(np.float64)
    return tree


def unroll_inference(policy, env, task: Task, max_depth: int, k_reach: int,
                     mode: str = "greedy",
                     rng: Optional[np.random.Generator] = None) -> SubgoalStack:
    """Left-branch decomposition used at test time: repeatedly replace the
    current target with a proposed subgoal until the target is reachable
    within k_reach actions or max_depth proposals have been spent.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"mode must be 'greedy' or 'sample', got {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    stack = [task.goal]
    for _ in range(max_depth):
        if reachable(env, task.init, stack[-1], k_reach):
            return SubgoalStack(subgoals=stack, complete=True)
        sub = Task(task.init, stack[-1])
        if mode == "greedy":
            pick = policy.greedy(sub)
        else:
            pick = policy.sample(sub, rng)
        stack.append(pick.state)
    complete = reachable(env, task.init, stack[-1], k_reach)
    return SubgoalStack(subgoals=stack, complete=complete)
