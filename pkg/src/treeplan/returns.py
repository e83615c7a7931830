"""Return estimation over subtask trees.

A plan succeeds only if every branch succeeds, so a node's return is the
minimum over its two children of (child reward + discounted child
return). Three estimators share that recursion: Monte Carlo (recurse to
the leaves), one-step (bootstrap children on value estimates), and the
lambda mixture interpolating between them. Non-terminal nodes cut off by
the depth limit bootstrap on their value estimate; terminal nodes always
return 0 and contribute through their unit reward instead.

The same recursion lifted to an abstract state set gives the Bellman
operators used by the contraction checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .envs import Task
from .tree import TreeTrajectory

ValueFn = Callable[[Task], float]


@dataclass(frozen=True)
class ReturnConfig:
    """Discounts and mixing weight shared across estimators. gamma and lam
    drive the tree recursions; gamma_linear drives the flat-trajectory
    lambda returns used by the explorer."""

    gamma: float = 0.95
    lam: float = 0.95
    gamma_linear: float = 0.99

    def __post_init__(self):
        for name in ("gamma", "lam", "gamma_linear"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _node_values(tree: TreeTrajectory, values: Optional[ValueFn]) -> np.ndarray:
    if values is None:
        return np.zeros(tree.n_nodes, dtype=np.float64)
    return np.array([float(values(t)) for t in tree.nodes], dtype=np.float64)


def tree_mc_return(tree: TreeTrajectory, cfg: ReturnConfig,
                   leaf_values: Optional[ValueFn] = None) -> np.ndarray:
    """Monte Carlo returns: full recursion to the leaves. Non-terminal
    leaves contribute 0 unless leaf_values supplies a bootstrap estimate.
    Stores the result on tree.returns and returns it."""
    n = tree.n_nodes
    v = _node_values(tree, leaf_values) if leaf_values is not None else None
    G = np.zeros(n, dtype=np.float64)
    R = tree.rewards
    gamma = cfg.gamma
    for i in range(n - 1, -1, -1):
        if tree.terminal[i]:
            continue
        if i >= tree.n_internal:
            G[i] = 0.0 if v is None else v[i]
            continue
        l, r = 2 * i + 1, 2 * i + 2
        G[i] = min(R[l] + gamma * G[l], R[r] + gamma * G[r])
    tree.returns = G
    return G


def tree_one_step_return(tree: TreeTrajectory, values: ValueFn,
                         cfg: ReturnConfig) -> np.ndarray:
    """One-step returns: each internal node looks only at child rewards
    plus discounted child value estimates. A terminal child's estimate is
    0 by definition (its task is already within worker reach)."""
    n = tree.n_nodes
    v = _node_values(tree, values)
    v[tree.terminal] = 0.0
    G = np.zeros(n, dtype=np.float64)
    R = tree.rewards
    gamma = cfg.gamma
    for i in range(n - 1, -1, -1):
        if tree.terminal[i]:
            continue
        if i >= tree.n_internal:
            G[i] = v[i]
            continue
        l, r = 2 * i + 1, 2 * i + 2
        G[i] = min(R[l] + gamma * v[l], R[r] + gamma * v[r])
    tree.returns = G
    return G


def tree_lambda_return(tree: TreeTrajectory, values: ValueFn,
                       cfg: ReturnConfig) -> np.ndarray:
    """Lambda-mixed returns: children contribute (1 - lam) times their
    value estimate plus lam times their own lambda return. Reduces to the
    one-step estimator at lam = 0 and to value-bootstrapped Monte Carlo
    at lam = 1. A terminal child's estimate is 0 by definition."""
    n = tree.n_nodes
    v = _node_values(tree, values)
    v[tree.terminal] = 0.0
    G = np.zeros(n, dtype=np.float64)
    R = tree.rewards
    gamma, lam = cfg.gamma, cfg.lam
    for i in range(n - 1, -1, -1):
        if tree.terminal[i]:
            continue
        if i >= tree.n_internal:
            G[i] = v[i]
            continue
        l, r = 2 * i + 1, 2 * i + 2
        G[i] = min(R[l] + gamma * ((1 - lam) * v[l] + lam * G[l]),
                   R[r] + gamma * ((1 - lam) * v[r] + lam * G[r]))
    tree.returns = G
    return G


def linear_lambda_return(rewards: Sequence[float], values: Sequence[float],
                         cfg: ReturnConfig) -> np.ndarray:
    """Backward lambda returns over a flat trajectory.

    rewards[k] is the reward collected by the k-th transition and
    values[k] the value estimate of the state that transition lands in.
    The final step has no successor return, so it bootstraps fully on its
    value. Uses gamma_linear as the discount.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.ndim != 1 or v.ndim != 1 or r.shape != v.shape:
        raise ValueError(f"rewards and values must be equal-length 1-d arrays, "
                         f"got shapes {r.shape} and {v.shape}")
    n = r.shape[0]
    if n == 0:
        raise ValueError("need at least one step")
    g, lam = cfg.gamma_linear, cfg.lam
    G = np.empty(n, dtype=np.float64)
    G[n - 1] = r[n - 1] + g * v[n - 1]
    for k in range(n - 2, -1, -1):
        G[k] = r[k] + g * ((1 - lam) * v[k] + lam * G[k + 1])
    return G


# One action of a TreeMdp state: (probability, reward_left, left_state,
# reward_right, right_state).
MdpAction = Tuple[float, float, int, float, int]


@dataclass
class TreeMdp:
    """Finite branching MDP for operator checks. actions[s] lists the
    stochastic policy's support at s; a state with no actions is a leaf.
    The state graph must be acyclic (generators put children on strictly
    deeper levels); bellman_operator raises on a cycle."""

    n_states: int
    terminal: np.ndarray
    actions: List[Tuple[MdpAction, ...]]

    def __post_init__(self):
        if len(self.actions) != self.n_states:
            raise ValueError("actions must have one entry per state")
        for acts in self.actions:
            if acts and abs(sum(a[0] for a in acts) - 1.0) > 1e-9:
                raise ValueError("action probabilities must sum to 1")


_KIND_TO_LAM = {"one_step": 0.0, "mc": 1.0}


def bellman_operator(kind: str, mdp: TreeMdp, V: np.ndarray,
                     cfg: ReturnConfig) -> np.ndarray:
    """Apply one Bellman backup of the given kind ('one_step', 'mc' or
    'lambda') to the value vector V.

    All three are the lambda recursion at lam = 0, 1 and cfg.lam: a state
    backs up the expectation over its policy support of the min over the
    two successors of reward + gamma * ((1 - lam) * value + lam * own
    recursive backup). Terminal states map to 0, leaves to their value.
    """
    if kind not in ("one_step", "mc", "lambda"):
        raise ValueError(f"unknown operator kind {kind!r}")
    lam = _KIND_TO_LAM.get(kind, cfg.lam)
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (mdp.n_states,):
        raise ValueError(f"V must have shape ({mdp.n_states},), got {V.shape}")
    gamma = cfg.gamma
    memo: dict = {}
    on_stack: set = set()

    def backup(s: int) -> float:
        if s in memo:
            return memo[s]
        if s in on_stack:
            raise ValueError(f"cycle through state {s} in TreeMdp")
        if mdp.terminal[s]:
            memo[s] = 0.0
            return 0.0
        acts = mdp.actions[s]
        if not acts:
            memo[s] = float(V[s])
            return memo[s]
        on_stack.add(s)
        total = 0.0
        for p, rl, l, rr, r in acts:
            vl = 0.0 if mdp.terminal[l] else float(V[l])
            vr = 0.0 if mdp.terminal[r] else float(V[r])
            left = rl + gamma * ((1 - lam) * vl + lam * backup(l))
            right = rr + gamma * ((1 - lam) * vr + lam * backup(r))
            total += p * min(left, right)
        on_stack.discard(s)
        memo[s] = total
        return total

    return np.array([backup(s) for s in range(mdp.n_states)], dtype=np.float64)
