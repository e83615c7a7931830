"""Tabular softmax planner policy and its gradient updates.

Each task (init, goal) owns a row of logits over a fixed candidate list
of subgoal states. Rows materialise lazily as uniform; reads never
create rows, so evaluation cannot mutate the tables. Updates are plain
SGD on the REINFORCE objective with an entropy bonus, with advantages
computed against a tabular value baseline, and only nodes that are
internal and not below a terminal contribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .envs import Task
from .returns import ReturnConfig
from .tree import SubgoalChoice, TreeTrajectory

Key = Tuple[int, int]


def _key(task: Task) -> Key:
    return (task.init, task.goal)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    return z - np.log(np.sum(np.exp(z)))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - np.max(logits))
    return z / np.sum(z)


def row_entropy(probs: np.ndarray) -> float:
    # p log p -> 0 as p -> 0; guard against exact underflow to zero.
    terms = np.where(probs > 0.0, probs * np.log(np.maximum(probs, 1e-300)), 0.0)
    return float(-np.sum(terms))


def entropy_grad(probs: np.ndarray) -> np.ndarray:
    """Gradient of the entropy of softmax(logits) with respect to the
    logits: dH/dl_j = -p_j (log p_j + H)."""
    h = row_entropy(probs)
    logp = np.log(np.maximum(probs, 1e-300))
    return -probs * (logp + h)


def actor_loss_and_grad(logits: np.ndarray, chosen: int, advantage: float,
                        entropy_coeff: float) -> Tuple[float, np.ndarray]:
    """Per-node actor loss -(A log pi(z) + eta H) and its exact gradient
    with respect to the row logits (advantage treated as a constant)."""
    logp = log_softmax(logits)
    probs = np.exp(logp)
    h = row_entropy(probs)
    loss = -(advantage * logp[chosen] + entropy_coeff * h)
    onehot = np.zeros_like(logits)
    onehot[chosen] = 1.0
    grad = -(advantage * (onehot - probs) + entropy_coeff * entropy_grad(probs))
    return float(loss), grad


def critic_loss_and_grad(value: float, target: float) -> Tuple[float, float]:
    """Squared error (v - G)^2 and its gradient with respect to v."""
    diff = value - target
    return diff * diff, 2.0 * diff


@dataclass
class PlannerPolicy:
    """Softmax subgoal policy over a fixed, ordered candidate state list."""

    candidates: Tuple[int, ...]
    entropy_coeff: float = 0.5
    learning_rate: float = 0.05
    logits: Dict[Key, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.candidates = tuple(int(c) for c in self.candidates)
        if len(self.candidates) == 0:
            raise ValueError("need at least one candidate subgoal")
        self._index = {c: i for i, c in enumerate(self.candidates)}

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    def candidate_index(self, state: int) -> int:
        """Position of a state in the candidate list."""
        try:
            return self._index[int(state)]
        except KeyError:
            raise ValueError(f"state {state} is not a candidate") from None

    def row(self, task: Task) -> np.ndarray:
        """Read-only logits for a task; unseen tasks are uniform. Never
        inserts, so lookups are side-effect free."""
        r = self.logits.get(_key(task))
        if r is None:
            return np.zeros(self.n_candidates, dtype=np.float64)
        return r

    def row_for_update(self, task: Task) -> np.ndarray:
        k = _key(task)
        r = self.logits.get(k)
        if r is None:
            r = np.zeros(self.n_candidates, dtype=np.float64)
            self.logits[k] = r
        return r

    def probs(self, task: Task) -> np.ndarray:
        return softmax(self.row(task))

    def sample(self, task: Task, rng: np.random.Generator) -> SubgoalChoice:
        logp = log_softmax(self.row(task))
        p = np.exp(logp)
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        idx = min(idx, self.n_candidates - 1)
        return SubgoalChoice(state=self.candidates[idx], index=idx,
                             log_prob=float(logp[idx]))

    def greedy(self, task: Task) -> SubgoalChoice:
        logp = log_softmax(self.row(task))
        idx = int(np.argmax(logp))  # ties resolve to the lowest index
        return SubgoalChoice(state=self.candidates[idx], index=idx,
                             log_prob=float(logp[idx]))


def policy_sample(policy: PlannerPolicy, task: Task,
                  rng: np.random.Generator) -> SubgoalChoice:
    return policy.sample(task, rng)


class ValueTable:
    """Tabular critic keyed by (init, goal).

    Unseen tasks read as `default` — the critic's init value. Reward
    schemes whose returns live below zero need the init at their return
    floor so that an early successful plan scores a positive advantage;
    with the floor at 0 (the natural choice for indicator rewards) such
    schemes would only ever suppress sampled candidates.
    """

    def __init__(self, default: float = 0.0):
        self.default = float(default)
        self.values: Dict[Key, float] = {}

    def __call__(self, task: Task) -> float:
        return self.values.get(_key(task), self.default)

    def get(self, key: Key) -> float:
        return self.values.get(key, self.default)

    def set(self, key: Key, v: float) -> None:
        self.values[key] = float(v)

    def __len__(self) -> int:
        return len(self.values)


def compute_advantages(tree: TreeTrajectory, returns: np.ndarray,
                       values: ValueTable) -> np.ndarray:
    """Advantage per node: (1 - T_i) (G_i - v(n_i)) at internal nodes,
    zero at terminal nodes and at every leaf."""
    adv = np.zeros(tree.n_nodes, dtype=np.float64)
    for i in range(tree.n_internal):
        if tree.terminal[i]:
            continue
        adv[i] = returns[i] - values(tree.nodes[i])
    return adv


@dataclass
class GradientReport:
    actor_loss: float
    critic_loss: float
    mean_advantage: float
    mean_entropy: float
    nodes_used: int


def update_planner(policy: PlannerPolicy, values: ValueTable,
                   trees: Sequence[TreeTrajectory],
                   cfg: ReturnConfig) -> GradientReport:
    """One SGD step on the batch. Gradients are summed over the usable
    internal nodes of each tree, averaged over the batch, and applied to
    the logit rows (ascent on A log pi + eta H) and value entries
    (descent on squared error against the stored returns)."""
    if len(trees) == 0:
        raise ValueError("empty batch")
    for t in trees:
        if t.returns is None:
            raise ValueError("tree has no returns; run a return estimator first")
    eta = policy.entropy_coeff
    lr = policy.learning_rate
    actor_grads: Dict[Key, np.ndarray] = {}
    critic_grads: Dict[Key, float] = {}
    actor_loss = 0.0
    critic_loss = 0.0
    adv_sum = 0.0
    ent_sum = 0.0
    used = 0
    for tree in trees:
        G = tree.returns
        for i in range(tree.n_internal):
            if tree.terminal[i]:
                continue
            node = tree.nodes[i]
            key = _key(node)
            chosen = int(tree.subgoal_choices[i])
            logp = log_softmax(policy.row(node))
            probs = np.exp(logp)
            h = row_entropy(probs)
            v = values.get(key)
            adv = float(G[i]) - v
            g = actor_grads.get(key)
            if g is None:
                g = np.zeros(policy.n_candidates, dtype=np.float64)
                actor_grads[key] = g
            g += adv * (-probs) + eta * entropy_grad(probs)
            g[chosen] += adv
            cl, cgrad = critic_loss_and_grad(v, float(G[i]))
            critic_grads[key] = critic_grads.get(key, 0.0) + cgrad
            actor_loss += -(adv * logp[chosen] + eta * h)
            critic_loss += cl
            adv_sum += adv
            ent_sum += h
            used += 1
    scale = 1.0 / len(trees)
    for key, g in actor_grads.items():
        row = policy.row_for_update(Task(*key))
        row += lr * scale * g
    for key, cg in critic_grads.items():
        values.set(key, values.get(key) - lr * scale * cg)
    return GradientReport(
        actor_loss=actor_loss * scale,
        critic_loss=critic_loss * scale,
        mean_advantage=adv_sum / max(used, 1),
        mean_entropy=ent_sum / max(used, 1),
        nodes_used=used,
    )


@dataclass
class BaselineCheck:
    """Empirical mean policy gradient when a state-only baseline replaces
    the advantage. The theory says the expectation is exactly zero."""

    mean_grad: np.ndarray
    stderr: np.ndarray
    norm: float
    n_samples: int


def baseline_invariance_check(policy: PlannerPolicy, task: Task,
                              n_samples: int, rng: np.random.Generator,
                              baseline_fn=None) -> BaselineCheck:
    """Sample subgoals from the policy at one task and average the score
    function weighted by a baseline value b(task) instead of a return.
    Streaming mean/variance, O(n_candidates) memory."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    b = 1.0 if baseline_fn is None else float(baseline_fn(task))
    probs = policy.probs(task)
    n = policy.n_candidates
    mean = np.zeros(n, dtype=np.float64)
    m2 = np.zeros(n, dtype=np.float64)
    cum = np.cumsum(probs)
    for k in range(1, n_samples + 1):
        idx = min(int(np.searchsorted(cum, rng.random(), side="right")), n - 1)
        g = -b * probs
        g[idx] += b
        delta = g - mean
        mean += delta / k
        m2 += delta * (g - mean)
    var = m2 / max(n_samples - 1, 1)
    stderr = np.sqrt(var / n_samples)
    return BaselineCheck(mean_grad=mean, stderr=stderr,
                         norm=float(np.linalg.norm(mean)),
                         n_samples=n_samples)


def save_policy(policy: PlannerPolicy, path: str) -> None:
    """Checkpoint to JSON with the candidate ordering spelled out."""
    obj = {
        "candidates": list(policy.candidates),
        "entropy_coeff": policy.entropy_coeff,
        "learning_rate": policy.learning_rate,
        "rows": {f"({k[0]},{k[1]})": [float(x) for x in row]
                 for k, row in sorted(policy.logits.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_policy(path: str) -> PlannerPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    policy = PlannerPolicy(candidates=tuple(obj["candidates"]),
                           entropy_coeff=float(obj["entropy_coeff"]),
                           learning_rate=float(obj["learning_rate"]))
    for key, row in obj["rows"].items():
        i, g = key.strip("()").split(",")
        policy.logits[(int(i), int(g))] = np.array(row, dtype=np.float64)
    return policy


def save_values(values: ValueTable, path: str) -> None:
    obj = {f"({k[0]},{k[1]})": v for k, v in sorted(values.values.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_values(path: str) -> ValueTable:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    table = ValueTable()
    for key, v in obj.items():
        i, g = key.strip("()").split(",")
        table.set((int(i), int(g)), float(v))
    return table
