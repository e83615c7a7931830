"""Offline hierarchical planning from a fixed dataset of trajectories.

Two goal-conditioned value tables are regressed with an asymmetric
expectile loss: a high-level one whose target is the min over the two
halves of a split task (bootstrapped through a periodically frozen
copy), and a low-level one trained by temporal difference on a binary
near-goal reward. A manager (subgoal proposer) and a worker (action
policy) are both trained by advantage-weighted behavioral cloning on the
dataset. Planning decomposes a task left-recursively, snapping each
proposal to the nearest landmark of a farthest-point-sampled goal
buffer, until the normalized low value says the remaining first leg is
reachable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import DistanceOracle, Task, sample_task
from .policy import PlannerPolicy, softmax
from .tree import SubgoalStack

Pair = Tuple[int, int]


@dataclass(frozen=True)
class OfflineConfig:
    """Hyperparameters for offline value and policy training."""

    tau: float = 0.7
    beta_awr: float = 3.0
    gamma_h: float = 0.9
    gamma_l: float = 0.99
    theta: float = -2.0
    buffer_capacity: int = 256
    reach_steps: int = 1
    worker_horizon: int = 8
    awr_clip: float = 100.0
    value_lr: float = 0.2
    policy_lr: float = 0.1
    target_refresh: int = 1000
    stats_half_life: int = 1000
    stats_warmup: int = 50

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"expectile must be in (0, 1), got {self.tau}")
        for name in ("gamma_h", "gamma_l"):
            g = getattr(self, name)
            if not 0.0 < g <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {g}")
        if self.buffer_capacity < 1:
            raise ValueError("buffer capacity must be positive")
        if self.reach_steps < 1 or self.worker_horizon < 1:
            raise ValueError("step horizons must be positive")


@dataclass
class GoalBuffer:
    """Ordered landmark set with bounded capacity and no duplicates."""

    capacity: int
    landmarks: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        seen = set()
        for s in self.landmarks:
            if s in seen:
                raise ValueError(f"duplicate landmark {s}")
            seen.add(s)
        if len(self.landmarks) > self.capacity:
            raise ValueError("more landmarks than capacity")

    def __len__(self) -> int:
        return len(self.landmarks)

    def __contains__(self, state: int) -> bool:
        return int(state) in self.landmarks

    def to_json(self) -> str:
        return json.dumps([int(s) for s in self.landmarks])

    @classmethod
    def from_json(cls, text: str, capacity: int) -> "GoalBuffer":
        return cls(capacity=capacity, landmarks=[int(s) for s in
                                                 json.loads(text)])


class HierValues:
    """Two goal-conditioned value tables plus running statistics of the
    low one over valid (short-horizon) subgoal pairs. Unseen pairs read
    as zero."""

    def __init__(self, cfg: OfflineConfig):
        self.cfg = cfg
        self.v_high: Dict[Pair, float] = {}
        self.v_low: Dict[Pair, float] = {}
        self._mu = 0.0
        self._var = 0.0
        self._n_stats = 0
        self._alpha = 1.0 - 2.0 ** (-1.0 / cfg.stats_half_life)

    def vh(self, s: int, g: int) -> float:
        return self.v_high.get((int(s), int(g)), 0.0)

    def vl(self, s: int, g: int) -> float:
        return self.v_low.get((int(s), int(g)), 0.0)

    def set_vh(self, s: int, g: int, v: float) -> None:
        self.v_high[(int(s), int(g))] = float(v)

    def set_vl(self, s: int, g: int, v: float) -> None:
        self.v_low[(int(s), int(g))] = float(v)

    def observe_low(self, value: float) -> None:
        """Fold one low-value observation into the exponential moving
        mean/variance used by the reachability gate."""
        self._n_stats += 1
        delta = value - self._mu
        self._mu += self._alpha * delta
        self._var = (1.0 - self._alpha) * (self._var
                                           + self._alpha * delta * delta)

    @property
    def mu(self) -> float:
        return self._mu

    @property
    def sigma(self) -> float:
        return max(math.sqrt(max(self._var, 0.0)), 1e-8)

    @property
    def warmed_up(self) -> bool:
        return self._n_stats >= self.cfg.stats_warmup

    def normalized_low(self, s: int, g: int) -> float:
        return (self.vl(s, g) - self.mu) / self.sigma


def expectile_loss(u: float, tau: float) -> float:
    """Asymmetric squared loss |tau - 1[u<0]| * u^2."""
    w = abs(tau - (1.0 if u < 0 else 0.0))
    return w * u * u


def expectile_loss_grad(u: float, tau: float) -> float:
    """Derivative of the expectile loss with respect to u."""
    w = abs(tau - (1.0 if u < 0 else 0.0))
    return 2.0 * w * u


def awr_weight(advantage: float, cfg: OfflineConfig) -> float:
    """Exponentiated advantage, clipped from above. The exponent is
    capped first so extreme advantages cannot overflow."""
    z = min(cfg.beta_awr * advantage, math.log(cfg.awr_clip))
    return min(math.exp(z), cfg.awr_clip)


def high_advantage(values: HierValues, s: int, w: int, g: int) -> float:
    """How much splitting (s, g) at w beats the direct estimate:
    min(V(s,w), V(w,g)) - V(s,g). Exactly invariant to adding the same
    constant to every table entry."""
    return min(values.vh(s, w), values.vh(w, g)) - values.vh(s, g)


def _episode_states(episode) -> List[int]:
    states = episode["states"] if isinstance(episode, dict) else episode.states
    return states


def _episode_actions(episode) -> List[int]:
    return episode["actions"] if isinstance(episode, dict) else episode.actions


def _validate_dataset(dataset: Sequence, min_states: int) -> List:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    usable = []
    for ep in dataset:
        states = _episode_states(ep)
        if len(_episode_actions(ep)) != len(states) - 1:
            raise ValueError("episode must have one action per transition")
        if len(states) >= min_states:
            usable.append(ep)
    if len(usable) == 0:
        raise ValueError(f"no episode has at least {min_states} states")
    return usable


def _sample_split(rng: np.random.Generator, n: int) -> Tuple[int, int]:
    """Indices i < j with j - i >= 2, uniform by rejection."""
    while True:
        i, j = rng.integers(n, size=2)
        if j < i:
            i, j = j, i
        if j - i >= 2:
            return int(i), int(j)


@dataclass
class HighTrainReport:
    mean_loss: float
    steps: int
    refreshes: int


def train_high_value(values: HierValues, dataset: Sequence,
                     cfg: OfflineConfig, rng: np.random.Generator,
                     steps: int = 1000) -> HighTrainReport:
    """Expectile-regress the high value toward split targets.

    Each step samples an episode and indices i < j with the midway state
    in between; each half earns 1 when it spans at most the reach
    threshold, and bootstraps through a frozen copy of the table that is
    refreshed periodically.
    """
    usable = _validate_dataset(dataset, 3)
    frozen = dict(values.v_high)
    loss_sum = 0.0
    refreshes = 0
    for step in range(steps):
        ep = usable[int(rng.integers(len(usable)))]
        states = _episode_states(ep)
        i, j = _sample_split(rng, len(states))
        mid = (i + j) // 2
        s, w, g = int(states[i]), int(states[mid]), int(states[j])
        r_left = 1.0 if mid - i <= cfg.reach_steps else 0.0
        r_right = 1.0 if j - mid <= cfg.reach_steps else 0.0
        target = min(r_left + cfg.gamma_h * frozen.get((s, w), 0.0),
                     r_right + cfg.gamma_h * frozen.get((w, g), 0.0))
        u = target - values.vh(s, g)
        loss_sum += expectile_loss(u, cfg.tau)
        values.set_vh(s, g, values.vh(s, g)
                      + cfg.value_lr * expectile_loss_grad(u, cfg.tau))
        if (step + 1) % cfg.target_refresh == 0:
            frozen = dict(values.v_high)
            refreshes += 1
    return HighTrainReport(mean_loss=loss_sum / steps, steps=steps,
                           refreshes=refreshes)


@dataclass
class LowTrainReport:
    mean_low_loss: float
    mean_worker_weight: float
    mean_manager_weight: float
    steps: int


def train_low_value_and_actors(values: HierValues,
                               manager: Optional[PlannerPolicy],
                               worker: Optional[PlannerPolicy],
                               dataset: Sequence, cfg: OfflineConfig,
                               rng: np.random.Generator, env,
                               steps: int = 1000,
                               worker_horizon: Optional[int] = None,
                               ) -> LowTrainReport:
    """Train the low value, the worker, and the manager from the dataset.

    Per step: one transition (s, a, s') is drawn. The low value is
    TD-regressed under the expectile loss on a goal relabeled uniformly
    from the episode's future, with reward 1 when the landing state is
    within one step of that goal. The worker clones the action toward a
    goal a bounded number of steps ahead, weighted by the clipped
    exponentiated low-value improvement. The manager clones midway
    subgoals of sampled splits, weighted by the clipped exponentiated
    split advantage of the high table.
    """
    usable = _validate_dataset(dataset, 2)
    oracle = DistanceOracle(env)
    horizon = cfg.worker_horizon if worker_horizon is None else worker_horizon
    low_loss = 0.0
    w_weight_sum = 0.0
    m_weight_sum = 0.0
    m_steps = 0
    for _ in range(steps):
        ep = usable[int(rng.integers(len(usable)))]
        states = _episode_states(ep)
        actions = _episode_actions(ep)
        t = int(rng.integers(len(actions)))
        s, a, s_next = int(states[t]), int(actions[t]), int(states[t + 1])

        # low value: TD on a hindsight goal from the episode's future
        g_v = int(states[int(rng.integers(t + 1, len(states)))])
        r = 1.0 if _near(oracle, s_next, g_v) else 0.0
        u = r + cfg.gamma_l * values.vl(s_next, g_v) - values.vl(s, g_v)
        low_loss += expectile_loss(u, cfg.tau)
        values.set_vl(s, g_v, values.vl(s, g_v)
                      + cfg.value_lr * expectile_loss_grad(u, cfg.tau))

        # worker: clone the action toward a near-future goal
        if worker is not None:
            h = int(rng.integers(1, min(horizon, len(states) - 1 - t) + 1))
            g_w = int(states[t + h])
            adv = values.vl(s_next, g_w) - values.vl(s, g_w)
            weight = awr_weight(adv, cfg)
            w_weight_sum += weight
            _awr_row_step(worker, Task(int(s), int(g_w)), a, weight,
                          cfg.policy_lr)
            values.observe_low(values.vl(s, g_w))

        # manager: clone the midway state of a sampled split
        if manager is not None and len(states) >= 3:
            i, j = _sample_split(rng, len(states))
            mid = (i + j) // 2
            sm, wm, gm = int(states[i]), int(states[mid]), int(states[j])
            adv_h = high_advantage(values, sm, wm, gm)
            weight = awr_weight(adv_h, cfg)
            m_weight_sum += weight
            _awr_row_step(manager, Task(int(sm), int(gm)),
                          manager.candidate_index(wm), weight,
                          cfg.policy_lr)
            m_steps += 1
    return LowTrainReport(
        mean_low_loss=low_loss / steps,
        mean_worker_weight=w_weight_sum / steps if worker is not None else 0.0,
        mean_manager_weight=m_weight_sum / max(m_steps, 1),
        steps=steps,
    )


def _near(oracle: DistanceOracle, s: int, g: int) -> bool:
    d = oracle.distance(s, g)
    return d is not None and d <= 1


def _awr_row_step(policy: PlannerPolicy, task: Task, chosen: int,
                  weight: float, lr: float) -> None:
    """Weighted cross-entropy step pulling the row toward the chosen
    candidate index."""
    row = policy.row_for_update(task)
    probs = softmax(row)
    row -= lr * weight * probs
    row[chosen] += lr * weight


def fps_update(buffer: GoalBuffer, candidates: Sequence[int],
               values: HierValues) -> GoalBuffer:
    """Grow the buffer by farthest-point sampling under the value-based
    distance -V_low(candidate, landmark).

    An empty buffer takes the first candidate as-is; afterwards the
    candidate with the largest minimum distance to the current landmarks
    is inserted until capacity or candidates are exhausted. Ties break
    toward the earliest candidate; members are never re-inserted.
    """
    if len(candidates) == 0:
        raise ValueError("no candidates")
    cands = [int(c) for c in candidates]
    if len(buffer) == 0:
        buffer.landmarks.append(cands[0])
    while len(buffer) < buffer.capacity:
        best = None
        best_dist = -math.inf
        for c in cands:
            if c in buffer:
                continue
            d = min(-values.vl(c, b) for b in buffer.landmarks)
            if d > best_dist:
                best, best_dist = c, d
        if best is None:
            break
        buffer.landmarks.append(best)
    return buffer


def retrieve_landmark(buffer: GoalBuffer, values: HierValues,
                      proposal: int) -> int:
    """Landmark nearest to the proposal under the value-based distance,
    earliest landmark on ties."""
    if len(buffer) == 0:
        raise ValueError("empty buffer")
    best, best_v = buffer.landmarks[0], -math.inf
    for b in buffer.landmarks:
        v = values.vl(proposal, b)
        if v > best_v:
            best, best_v = b, v
    return best


def offline_plan(manager: PlannerPolicy, values: HierValues,
                 buffer: GoalBuffer, task: Task, cfg: OfflineConfig,
                 max_depth: int = 8, *, mode: str = "greedy",
                 rng: Optional[np.random.Generator] = None) -> SubgoalStack:
    """Left-recursive decomposition with landmark snapping.

    While the normalized low value of the first unsolved leg stays at or
    below the threshold and budget remains, the manager's proposal (its
    distribution argmax, or a draw from it in sample mode) is replaced by
    its nearest buffer landmark and pushed. Complete when the gate clears
    before the budget runs out.
    """
    if len(buffer) == 0:
        raise ValueError("empty buffer")
    if not values.warmed_up:
        raise ValueError("low-value statistics not warmed up")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown proposal mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs a random generator")
    subgoals = [int(task.goal)]
    for _ in range(max_depth):
        if values.normalized_low(task.init, subgoals[-1]) > cfg.theta:
            break
        leg = Task(task.init, subgoals[-1])
        if mode == "sample":
            proposal = manager.sample(leg, rng).state
        else:
            proposal = manager.greedy(leg).state
        subgoals.append(retrieve_landmark(buffer, values, proposal))
    complete = values.normalized_low(task.init, subgoals[-1]) > cfg.theta
    return SubgoalStack(subgoals=subgoals, complete=complete)


def execute_stack(env, worker: PlannerPolicy, stack: SubgoalStack,
                  init: int, max_steps: int) -> Tuple[int, int]:
    """Walk the stack nearest-subgoal-first with greedy worker actions.

    Returns (final state, steps taken). Each subgoal must be hit exactly
    before moving on; the step budget is shared across subgoals.
    """
    s = int(init)
    steps = 0
    for target in reversed(stack.subgoals):
        while s != target and steps < max_steps:
            s = int(env.step(s, worker.greedy(Task(s, target)).index))
            steps += 1
    return s, steps


def rollout_offline(env, agent: "OfflineAgent", task: Task,
                    max_steps: int, *, max_depth: int = 8,
                    mode: str = "greedy",
                    rng: Optional[np.random.Generator] = None,
                    ) -> Tuple[int, int, int]:
    """Plan, walk the one gate-certified leg, replan from where that
    leaves the agent, and repeat until the goal or the step budget.

    Only the deepest subgoal of each decomposition has passed the
    reachability gate, so only that leg is executed before the remaining
    task is decomposed afresh. Returns (final state, env steps, plans).
    """
    s = int(task.init)
    steps = 0
    plans = 0
    cfg = agent.cfg
    while s != task.goal and steps < max_steps:
        stack = offline_plan(agent.manager, agent.values, agent.buffer,
                             Task(s, task.goal), cfg, max_depth,
                             mode=mode, rng=rng)
        plans += 1
        target = int(stack.subgoals[-1])
        if target == s:  # degenerate proposal; fall back to the raw goal
            target = int(task.goal)
        moved = False
        while s != target and steps < max_steps:
            s = int(env.step(s, agent.worker.greedy(Task(s, target)).index))
            steps += 1
            moved = True
        if not moved:
            break
    return s, steps, plans


def generate_offline_dataset(env, rng: np.random.Generator, episodes: int,
                             *, epsilon: float = 0.3, min_distance: int = 1,
                             max_distance: Optional[int] = None,
                             slack: int = 8) -> List[dict]:
    """Noisy shortest-path walks between random task endpoints.

    Each episode heads from a sampled start toward a sampled goal, taking
    a uniformly random action with probability epsilon and the greedy
    step otherwise, stopping at the goal or after 4x the true distance
    plus slack. max_distance caps the task length so the dataset can be
    restricted to short expert demonstrations.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    if max_distance is not None and max_distance < min_distance:
        raise ValueError("max_distance below min_distance")
    oracle = DistanceOracle(env)
    out = []
    for _ in range(episodes):
        task = sample_task(env, rng, "min_distance", d=min_distance)
        while (max_distance is not None
               and oracle.distance(task.init, task.goal) > max_distance):
            task = sample_task(env, rng, "min_distance", d=min_distance)
        cap = 4 * oracle.distance(task.init, task.goal) + slack
        s = task.init
        states = [int(s)]
        actions: List[int] = []
        for _ in range(cap):
            if s == task.goal:
                break
            if rng.random() < epsilon:
                a = int(rng.integers(env.n_actions))
            else:
                a = oracle.greedy_step(s, task.goal)
            s = int(env.step(s, a))
            actions.append(a)
            states.append(s)
        out.append({"states": states, "actions": actions})
    return out


def save_offline_dataset(path: str, dataset: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for ep in dataset:
            fh.write(json.dumps({"states": [int(s) for s in ep["states"]],
                                 "actions": [int(a) for a in ep["actions"]]})
                     + "\n")


def load_offline_dataset(path: str) -> List[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class OfflineAgent:
    """Bundle of everything the offline planner needs at decision time."""

    values: HierValues
    manager: PlannerPolicy
    worker: PlannerPolicy
    buffer: GoalBuffer
    cfg: OfflineConfig


def train_offline_agent(env, dataset: Sequence, cfg: OfflineConfig,
                        rng: np.random.Generator, *,
                        rounds: int = 10, high_steps: int = 2000,
                        low_steps: int = 2000) -> OfflineAgent:
    """Full offline pipeline: alternate high-value regression with
    low-value/actor training, refreshing the goal buffer from the states
    seen in the dataset after every round."""
    states = sorted({int(s) for ep in dataset for s in _episode_states(ep)})
    if not states:
        raise ValueError("empty dataset")
    values = HierValues(cfg)
    manager = PlannerPolicy(candidates=tuple(env.states()))
    worker = PlannerPolicy(candidates=tuple(range(env.n_actions)))
    buffer = GoalBuffer(capacity=cfg.buffer_capacity)
    for _ in range(rounds):
        train_high_value(values, dataset, cfg, rng, steps=high_steps)
        train_low_value_and_actors(values, manager, worker, dataset, cfg,
                                   rng, env, steps=low_steps)
        buffer.landmarks.clear()
        fps_update(buffer, states, values)
    return OfflineAgent(values=values, manager=manager, worker=worker,
                        buffer=buffer, cfg=cfg)


def train_flat_baseline(env, dataset: Sequence, cfg: OfflineConfig,
                        rng: np.random.Generator, *,
                        rounds: int = 10, low_steps: int = 2000,
                        ) -> Tuple[HierValues, PlannerPolicy]:
    """Non-hierarchical reference: the same advantage-weighted cloning of
    actions, but with goals relabeled from the entire episode future and
    no manager, buffer, or high table. Executed directly on the task."""
    values = HierValues(cfg)
    actor = PlannerPolicy(candidates=tuple(range(env.n_actions)))
    far = replace(cfg, worker_horizon=10 ** 9)
    for _ in range(rounds):
        train_low_value_and_actors(values, None, actor, dataset, far,
                                   rng, env, steps=low_steps)
    return values, actor
