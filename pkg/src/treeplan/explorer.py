"""Memory-augmented exploration over an environment's state graph.

An exploring agent chooses a goal state every K raw steps from a tabular
softmax conditioned on its current state and a coarse memory of where it
was K, 2K, and 4K steps earlier. The steps in between walk greedily
toward the chosen goal. The reward is the novelty of the coarse
trajectory: spaced triplets (where I was q coarse steps ago, the halfway
point, and where I am now) are counted, and each occurrence pays
1/(1 + previous count), so revisiting known passages decays toward zero
while new ones pay full price.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import DistanceOracle, Task
from .policy import (GradientReport, critic_loss_and_grad, entropy_grad,
                     log_softmax, row_entropy, softmax)
from .returns import ReturnConfig, linear_lambda_return

NULL_STATE = -1

MemoryView = Tuple[int, ...]
ExplorerKey = Tuple[int, MemoryView]

TripletKey = Tuple[int, int, int, int]


class TripletTable:
    """Visit counts for spaced state triplets on the coarse trajectory.

    Keys are (state q coarse steps back, state q/2 back, current state, q).
    """

    def __init__(self):
        self.counts: Dict[TripletKey, int] = {}

    def count(self, key: TripletKey) -> int:
        return self.counts.get(key, 0)

    def increment(self, key: TripletKey) -> None:
        self.counts[key] = self.counts.get(key, 0) + 1

    @property
    def distinct(self) -> int:
        return len(self.counts)

    def distinct_at(self, q: int) -> int:
        return sum(1 for k in self.counts if k[3] == q)


def exploration_reward(table: TripletTable, trajectory: Sequence[int],
                       resolutions: Tuple[int, ...] = (2, 4)) -> np.ndarray:
    """Novelty reward at every index of a coarse state sequence.

    reward[t] sums 1/(1 + count) over each resolution q with t - q >= 0,
    for the triplet (trajectory[t-q], trajectory[t-q//2], trajectory[t], q);
    each triplet's count is incremented right after it is scored, in
    ascending t, so repeats within one call already decay. Indices before
    the smallest resolution earn 0.
    """
    for q in resolutions:
        if q < 2 or q % 2:
            raise ValueError(f"resolutions must be even and >= 2, got {q}")
    states = [int(s) for s in trajectory]
    rewards = np.zeros(len(states), dtype=np.float64)
    for t in range(len(states)):
        for q in resolutions:
            if t - q < 0:
                continue
            key = (states[t - q], states[t - q // 2], states[t], q)
            rewards[t] += 1.0 / (1.0 + table.count(key))
            table.increment(key)
    return rewards


@dataclass
class MemoryBuffer:
    """Ring of the most recent states sampled every K raw steps.

    Capacity must be a power of two; the memory read spans capacity many
    coarse steps back at doubling lags, one slot per power of two, so a
    capacity of 8 yields the three lags (K, 2K, 4K).
    """

    coarse_steps: int
    capacity: int = 8
    _ring: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.coarse_steps < 1:
            raise ValueError("coarse step size must be positive")
        if self.capacity < 2 or self.capacity & (self.capacity - 1):
            raise ValueError("capacity must be a power of two >= 2")

    @property
    def n_slots(self) -> int:
        return self.capacity.bit_length() - 1

    @property
    def lags(self) -> Tuple[int, ...]:
        """Lookback offsets in coarse units: 1, 2, 4, ..., capacity/2."""
        return tuple(1 << i for i in range(self.n_slots))

    def reset(self) -> None:
        self._ring.clear()

    def record(self, t: int, state: int) -> None:
        """Store the state reached at raw step t (a positive multiple of
        the coarse step size)."""
        if t <= 0 or t % self.coarse_steps:
            raise ValueError(
                f"record only at positive multiples of {self.coarse_steps}")
        self._ring.append((int(t), int(state)))
        if len(self._ring) > self.capacity:
            del self._ring[0]

    def state_at(self, t: int) -> Optional[int]:
        for step, state in reversed(self._ring):
            if step == t:
                return state
        return None


def extract_memory(buffer: MemoryBuffer, t: int) -> MemoryView:
    """States at raw steps t-K, t-2K, t-4K, ... with the null marker for
    anything before the first recorded step (the episode start is never
    recorded)."""
    k = buffer.coarse_steps
    out = []
    for lag in buffer.lags:
        u = t - lag * k
        if u < k:
            out.append(NULL_STATE)
        else:
            s = buffer.state_at(u)
            out.append(NULL_STATE if s is None else s)
    return tuple(out)


def memory_view_from_coarse(coarse: Sequence[int], j: int,
                            n_slots: int = 3) -> MemoryView:
    """Memory the agent saw at coarse decision index j, reconstructed by
    direct indexing of the coarse log (entry 0 is the never-recorded
    episode start)."""
    out = []
    for i in range(n_slots):
        idx = j - (1 << i)
        out.append(int(coarse[idx]) if idx >= 1 else NULL_STATE)
    return tuple(out)


@dataclass
class ExplorerPolicy:
    """Softmax goal-picking policy keyed by (state, memory tuple), with a
    value table on the same keys. Rows read as uniform until an update
    writes them; reads never insert."""

    candidates: Tuple[int, ...]
    entropy_coeff: float = 0.05
    learning_rate: float = 0.1
    logits: Dict[ExplorerKey, np.ndarray] = field(default_factory=dict)
    values: Dict[ExplorerKey, float] = field(default_factory=dict)

    def __post_init__(self):
        self.candidates = tuple(int(c) for c in self.candidates)
        if len(self.candidates) == 0:
            raise ValueError("need at least one candidate goal")

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    def row(self, key: ExplorerKey) -> np.ndarray:
        r = self.logits.get(key)
        if r is None:
            return np.zeros(self.n_candidates, dtype=np.float64)
        return r

    def row_for_update(self, key: ExplorerKey) -> np.ndarray:
        r = self.logits.get(key)
        if r is None:
            r = np.zeros(self.n_candidates, dtype=np.float64)
            self.logits[key] = r
        return r

    def probs(self, key: ExplorerKey) -> np.ndarray:
        return softmax(self.row(key))

    def value(self, key: ExplorerKey) -> float:
        return self.values.get(key, 0.0)

    def sample(self, rng: np.random.Generator, key: ExplorerKey) -> int:
        p = np.exp(log_softmax(self.row(key)))
        idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
        return min(idx, self.n_candidates - 1)


@dataclass
class ExplorationEpisode:
    """One rollout: raw states, the coarse subsample, the goal picked at
    each coarse decision with the memory it saw, and the novelty reward
    at each coarse index."""

    states: List[int]
    coarse: List[int]
    goal_indices: List[int]
    memories: List[MemoryView]
    rewards: np.ndarray

    @property
    def n_decisions(self) -> int:
        return len(self.goal_indices)

    def to_json_dict(self) -> dict:
        return {
            "states": [int(s) for s in self.states],
            "coarse": [int(s) for s in self.coarse],
            "rewards": [float(r) for r in self.rewards],
        }


def run_exploration(env, policy: Optional[ExplorerPolicy], episodes: int,
                    horizon: int, coarse_steps: int,
                    rng: np.random.Generator, *,
                    table: Optional[TripletTable] = None,
                    resolutions: Tuple[int, ...] = (2, 4),
                    init_state: int = 0,
                    random_goals: bool = False,
                    worker: Optional[DistanceOracle] = None,
                    ) -> List[ExplorationEpisode]:
    """Roll out exploration episodes and score their coarse novelty.

    Every coarse_steps raw steps the agent picks a goal — from the policy,
    or uniformly at random under the baseline flag — and walks greedily
    toward it until the next decision. The triplet table accumulates
    across episodes (and across calls when one is passed in).
    """
    if horizon < 1 or horizon % coarse_steps:
        raise ValueError("horizon must be a positive multiple of the "
                         "coarse step size")
    if not random_goals and policy is None:
        raise ValueError("need a policy unless random_goals is set")
    if table is None:
        table = TripletTable()
    if worker is None:
        worker = DistanceOracle(env)
    candidates = tuple(env.states()) if policy is None else policy.candidates
    buffer = MemoryBuffer(coarse_steps)
    out = []
    for _ in range(episodes):
        s = int(init_state)
        states = [s]
        coarse = [s]
        goal_indices: List[int] = []
        memories: List[MemoryView] = []
        buffer.reset()
        goal = s
        for t in range(horizon):
            if t % coarse_steps == 0:
                mem = extract_memory(buffer, t)
                if random_goals:
                    idx = int(rng.integers(len(candidates)))
                else:
                    idx = policy.sample(rng, (s, mem))
                goal = candidates[idx]
                goal_indices.append(idx)
                memories.append(mem)
            s = int(env.step(s, worker.greedy_step(s, goal)))
            states.append(s)
            if (t + 1) % coarse_steps == 0:
                buffer.record(t + 1, s)
                coarse.append(s)
        rewards = exploration_reward(table, coarse, resolutions)
        out.append(ExplorationEpisode(states=states, coarse=coarse,
                                      goal_indices=goal_indices,
                                      memories=memories, rewards=rewards))
    return out


def update_explorer(policy: ExplorerPolicy,
                    rollouts: Sequence[ExplorationEpisode],
                    cfg: ReturnConfig) -> GradientReport:
    """One SGD step from a batch of exploration episodes.

    Each decision is credited with the novelty collected at the next
    coarse state; returns come from the chained lambda estimator with the
    sequence discount, advantages subtract the value of the decision key,
    and the gradient form matches the planner update: ascent on
    A log pi + eta H for the actor, descent on squared error for the
    critic, summed per episode and averaged over the batch.
    """
    if len(rollouts) == 0:
        raise ValueError("empty batch")
    eta = policy.entropy_coeff
    lr = policy.learning_rate
    actor_grads: Dict[ExplorerKey, np.ndarray] = {}
    critic_grads: Dict[ExplorerKey, float] = {}
    actor_loss = 0.0
    critic_loss = 0.0
    adv_sum = 0.0
    ent_sum = 0.0
    used = 0
    for ep in rollouts:
        m = ep.n_decisions
        if m == 0:
            continue
        n_slots = len(ep.memories[0])
        keys = [(ep.coarse[j], ep.memories[j]) for j in range(m)]
        landing = [
            (ep.coarse[j + 1],
             memory_view_from_coarse(ep.coarse, j + 1, n_slots))
            for j in range(m)
        ]
        rewards = np.asarray(ep.rewards[1:m + 1], dtype=np.float64)
        boot = np.array([policy.value(k) for k in landing])
        G = linear_lambda_return(rewards, boot, cfg)
        for j in range(m):
            key = keys[j]
            chosen = int(ep.goal_indices[j])
            logp = log_softmax(policy.row(key))
            probs = np.exp(logp)
            h = row_entropy(probs)
            v = policy.value(key)
            adv = float(G[j]) - v
            g = actor_grads.get(key)
            if g is None:
                g = np.zeros(policy.n_candidates, dtype=np.float64)
                actor_grads[key] = g
            g += adv * (-probs) + eta * entropy_grad(probs)
            g[chosen] += adv
            cl, cgrad = critic_loss_and_grad(v, float(G[j]))
            critic_grads[key] = critic_grads.get(key, 0.0) + cgrad
            actor_loss += -(adv * logp[chosen] + eta * h)
            critic_loss += cl
            adv_sum += adv
            ent_sum += h
            used += 1
    if used == 0:
        raise ValueError("no decisions in batch")
    scale = 1.0 / len(rollouts)
    for key, g in actor_grads.items():
        row = policy.row_for_update(key)
        row += lr * scale * g
    for key, cg in critic_grads.items():
        policy.values[key] = policy.value(key) - lr * scale * cg
    return GradientReport(
        actor_loss=actor_loss * scale,
        critic_loss=critic_loss * scale,
        mean_advantage=adv_sum / used,
        mean_entropy=ent_sum / used,
        nodes_used=used,
    )


def save_episodes(path: str, episodes: Sequence[ExplorationEpisode]) -> None:
    """Write one JSON object per line with keys states, coarse, rewards."""
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_json_dict()) + "\n")


def load_episodes(path: str) -> List[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def tasks_from_dataset(episodes: Sequence, rng: np.random.Generator,
                       n_tasks: int, max_tries: int = 20) -> List[Task]:
    """Sample planner training tasks as ordered pairs of states visited in
    the same episode, earlier state as start. Accepts in-memory episodes
    or dicts loaded from the JSONL dataset."""
    if len(episodes) == 0:
        raise ValueError("no episodes to sample from")
    out = []
    for _ in range(n_tasks):
        task = None
        for _ in range(max_tries):
            ep = episodes[int(rng.integers(len(episodes)))]
            states = ep["states"] if isinstance(ep, dict) else ep.states
            i, j = sorted(rng.integers(len(states), size=2))
            if states[i] != states[j]:
                task = Task(int(states[i]), int(states[j]))
                break
        if task is None:
            ep = episodes[int(rng.integers(len(episodes)))]
            states = ep["states"] if isinstance(ep, dict) else ep.states
            task = Task(int(states[0]), int(states[-1]))
        out.append(task)
    return out
