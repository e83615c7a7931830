"""Experiment drivers: configuration, training loops, evaluation
protocols, the ablation matrix, and metric records.

Online training repeatedly builds plan trees on sampled tasks, scores
them with the configured return estimator and reward scheme, and applies
the policy-gradient update; an optional exploration phase collects
novelty-driven trajectories first and draws the training tasks from
them. Evaluation is environment-specific: toggle boards build one full
greedy tree and score 1 only if every branch terminates, mazes build a
leftmost subgoal stack and walk it greedily under a step cap tied to the
true distance.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .envs import (DistanceOracle, LightsOut, RoomMaze, Task, default_maze,
                   generate_maze_layout, reachable, sample_task)
from .explorer import (ExplorerPolicy, TripletTable, run_exploration,
                       tasks_from_dataset, update_explorer)
from .offline import (OfflineConfig, rollout_offline,
                      train_offline_agent)
from .policy import (PlannerPolicy, ValueTable, critic_loss_and_grad,
                     entropy_grad, log_softmax, update_planner)
from .returns import (ReturnConfig, tree_lambda_return, tree_mc_return,
                      tree_one_step_return)
from .tree import (TreeTrajectory, child_indices, mark_terminal,
                   unroll_inference, unroll_training_tree)

ENV_KINDS = ("lightsout", "maze")
MODES = ("online", "offline", "explore-only")
REWARD_SCHEMES = ("default", "neg_rew", "dist_sum", "gae")
ESTIMATORS = ("lambda", "mc", "one_step")

# node reward used by the distance-sum scheme when a subtask's goal is in
# an unreachable component (possible on toggle boards)
UNREACHABLE_COST = 16.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a training or evaluation run needs."""

    env_kind: str = "lightsout"
    env_size: int = 2
    depth: int = 5
    infer_depth: int = 8
    returns: ReturnConfig = field(default_factory=ReturnConfig)
    learning_rate: float = 0.05
    entropy_coeff: float = 0.5
    episodes: int = 2000
    eval_episodes: int = 100
    seed: int = 0
    mode: str = "online"
    reward_scheme: str = "default"
    estimator: str = "lambda"
    k_reach: int = 1
    batch_size: int = 16
    eval_every: int = 0
    use_explorer: bool = False
    explorer_random_goals: bool = False
    explore_fraction: float = 0.3
    explore_horizon: int = 64
    explore_coarse: int = 8
    task_min_distance: int = 1
    offline: OfflineConfig = field(default_factory=OfflineConfig)

    def __post_init__(self):
        if self.env_kind not in ENV_KINDS:
            raise ValueError(f"env_kind must be one of {ENV_KINDS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.reward_scheme not in REWARD_SCHEMES:
            raise ValueError(f"reward_scheme must be one of {REWARD_SCHEMES}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.depth > self.infer_depth:
            raise ValueError("training depth must not exceed inference depth")
        if self.episodes < 0 or self.eval_episodes < 1 or self.batch_size < 1:
            raise ValueError("bad budget")
        if not 0.0 <= self.explore_fraction <= 1.0:
            raise ValueError("explore_fraction must be in [0, 1]")
        if self.k_reach < 1:
            raise ValueError("k_reach must be positive")


def build_env(cfg: ExperimentConfig):
    if cfg.env_kind == "lightsout":
        return LightsOut(cfg.env_size)
    if cfg.env_size in (5, 7):
        return default_maze(cfg.env_size)
    layout = generate_maze_layout(cfg.env_size,
                                  np.random.default_rng(31 * cfg.env_size + 7),
                                  extra_doors=cfg.env_size - 1)
    return RoomMaze(layout)


@dataclass
class MetricsRecord:
    """One evaluation snapshot. Path statistics are over successful
    episodes; the final summary additionally reports the all-episode
    variant under separate labels."""

    step: int
    success_rate: float
    avg_path_length: float
    path_length_std: float
    mean_return: float
    mean_plan_depth: float
    explorer_coverage: float

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success rate must be in [0, 1]")

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EvalDetails:
    """Per-episode evaluation outcomes backing a MetricsRecord."""

    successes: List[bool]
    path_lengths: List[int]
    plan_depths: List[int]
    optimal_lengths: List[int]

    @property
    def success_paths(self) -> List[int]:
        return [p for p, ok in zip(self.path_lengths, self.successes) if ok]

    def optimality_ratio(self) -> float:
        """Mean executed/optimal length over successful episodes."""
        pairs = [(p, d) for p, d, ok in zip(self.path_lengths,
                                            self.optimal_lengths,
                                            self.successes) if ok and d > 0]
        if not pairs:
            return math.inf
        return float(np.mean([p / d for p, d in pairs]))


def apply_reward_scheme(tree: TreeTrajectory, scheme: str,
                        oracle: DistanceOracle) -> TreeTrajectory:
    """Rewrite node rewards in place for the configured ablation scheme.

    default and gae keep the unit terminal rewards; neg_rew charges -1 at
    non-terminal nodes and 0 at terminal ones; dist_sum charges the
    negated true distance of each node's task.
    """
    if scheme in ("default", "gae"):
        return tree
    if scheme == "neg_rew":
        tree.rewards[:] = np.where(tree.terminal, 0.0, -1.0)
        return tree
    if scheme == "dist_sum":
        for i, node in enumerate(tree.nodes):
            d = oracle.distance(node.init, node.goal)
            tree.rewards[i] = -float(d) if d is not None else -UNREACHABLE_COST
        return tree
    raise ValueError(f"unknown reward scheme {scheme!r}")


def return_floor(cfg: ExperimentConfig) -> float:
    """Fixed point of the worst-case backup under the configured scheme:
    the value a chain of minimal rewards converges to, worst / (1 - γ).

    The critic starts here so a totally failing plan scores advantage 0
    and any partial success scores a positive one; starting instead at 0
    (the natural floor for the indicator scheme, whose worst reward is 0)
    would make every sampled candidate of a below-zero scheme look bad,
    leaving only suppression and no convergence pressure.
    """
    worst = {"default": 0.0, "gae": 0.0,
             "neg_rew": -1.0, "dist_sum": -UNREACHABLE_COST}[cfg.reward_scheme]
    gamma = cfg.returns.gamma
    if gamma >= 1.0:
        raise ValueError("return floor undefined at gamma = 1")
    return worst / (1.0 - gamma)


def advantage_scale(cfg: ExperimentConfig) -> float:
    """Width of the configured scheme's advantage range relative to the
    indicator scheme's unit width; learning rates are divided by this so
    one step size works across schemes."""
    return max(1.0, abs(return_floor(cfg)))


def compute_returns(tree: TreeTrajectory, values: ValueTable,
                    cfg: ReturnConfig, estimator: str) -> np.ndarray:
    if estimator == "lambda":
        return tree_lambda_return(tree, values, cfg)
    if estimator == "mc":
        return tree_mc_return(tree, cfg)
    if estimator == "one_step":
        return tree_one_step_return(tree, values, cfg)
    raise ValueError(f"unknown estimator {estimator!r}")


def gae_advantages(tree: TreeTrajectory, values: ValueTable,
                   cfg: ReturnConfig) -> np.ndarray:
    """Recursive advantage estimate: at each usable internal node, the
    minimum over children of the one-step temporal difference plus the
    discounted, lambda-weighted child advantage."""
    n = tree.n_nodes
    adv = np.zeros(n, dtype=np.float64)
    v = np.array([values(t) for t in tree.nodes], dtype=np.float64)
    for i in reversed(range(n)):
        if tree.terminal[i] or not tree.is_internal(i):
            continue
        best = math.inf
        for c in child_indices(i):
            future = 0.0 if tree.terminal[c] else v[c]
            delta = tree.rewards[c] + cfg.gamma * future - v[i]
            best = min(best, delta + cfg.gamma * cfg.lam * adv[c])
        adv[i] = best
    return adv


def _update_from_advantages(policy: PlannerPolicy, values: ValueTable,
                            trees: Sequence[TreeTrajectory],
                            advantages: Sequence[np.ndarray]) -> float:
    """Planner update with externally supplied advantages; the critic
    regresses toward advantage + current value. Returns the mean root
    critic target for reporting."""
    eta = policy.entropy_coeff
    lr = policy.learning_rate
    actor_grads: Dict[Tuple[int, int], np.ndarray] = {}
    critic_grads: Dict[Tuple[int, int], float] = {}
    root_targets = []
    for tree, adv in zip(trees, advantages):
        root_targets.append(adv[0] + values(tree.nodes[0]))
        for i in range(tree.n_internal):
            if tree.terminal[i]:
                continue
            node = tree.nodes[i]
            key = (node.init, node.goal)
            chosen = int(tree.subgoal_choices[i])
            probs = np.exp(log_softmax(policy.row(node)))
            a = float(adv[i])
            g = actor_grads.get(key)
            if g is None:
                g = np.zeros(policy.n_candidates, dtype=np.float64)
                actor_grads[key] = g
            g += a * (-probs) + eta * entropy_grad(probs)
            g[chosen] += a
            v = values.get(key)
            _, cgrad = critic_loss_and_grad(v, v + a)
            critic_grads[key] = critic_grads.get(key, 0.0) + cgrad
    scale = 1.0 / len(trees)
    for key, g in actor_grads.items():
        row = policy.row_for_update(Task(*key))
        row += lr * scale * g
    for key, cg in critic_grads.items():
        values.set(key, values.get(key) - lr * scale * cg)
    return float(np.mean(root_targets))


def eval_tasks(env, cfg: ExperimentConfig,
               rng: np.random.Generator) -> List[Task]:
    """Evaluation task distribution: toggle boards draw a solvable
    non-trivial start against the all-off goal; mazes draw ordered pairs
    of distinct corner rooms."""
    tasks = []
    if env.kind == "lightsout":
        pool = sorted(env.solvable_set() - {env.goal_state})
        for _ in range(cfg.eval_episodes):
            init = pool[int(rng.integers(len(pool)))]
            tasks.append(Task(int(init), env.goal_state))
    else:
        corners = env.corner_rooms
        pairs = [(a, b) for a in corners for b in corners if a != b]
        for _ in range(cfg.eval_episodes):
            a, b = pairs[int(rng.integers(len(pairs)))]
            tasks.append(Task(int(a), int(b)))
    return tasks


def _eval_full_tree(env, policy: PlannerPolicy, task: Task, depth: int,
                    k_reach: int, oracle: DistanceOracle
                    ) -> Tuple[bool, int, int]:
    """Single-attempt full-plan scoring: expand every non-terminal node
    greedily; the attempt succeeds only if every branch reaches a
    terminal task within the depth budget. Returns (success, executed
    action count, deepest expansion)."""

    def expand(t: Task, d: int) -> Tuple[bool, int, int]:
        if reachable(env, t.init, t.goal, k_reach):
            return True, int(oracle.distance(t.init, t.goal)), 0
        if d == 0:
            return False, 0, 0
        w = policy.greedy(t).state
        ok_l, p_l, d_l = expand(Task(t.init, w), d - 1)
        ok_r, p_r, d_r = expand(Task(w, t.goal), d - 1)
        return ok_l and ok_r, p_l + p_r, 1 + max(d_l, d_r)

    return expand(task, depth)


def _eval_stack_walk(env, policy: PlannerPolicy, task: Task,
                     cfg: ExperimentConfig, oracle: DistanceOracle
                     ) -> Tuple[bool, int, int, int]:
    """Leftmost-stack inference followed by greedy execution of each
    subgoal in order, all within a step cap of four times the true task
    distance. Returns (success, steps walked, plan depth, optimal)."""
    stack = unroll_inference(policy, env, task, cfg.infer_depth,
                             cfg.k_reach, "greedy")
    d_opt = oracle.distance(task.init, task.goal)
    cap = 4 * int(d_opt if d_opt else 1)
    s = task.init
    steps = 0
    for target in reversed(stack.subgoals):
        while s != target and steps < cap:
            s = int(env.step(s, oracle.greedy_step(s, target)))
            steps += 1
    return s == task.goal, steps, stack.n_policy_calls, int(d_opt or 0)


def run_eval_details(policy: PlannerPolicy, env, cfg: ExperimentConfig,
                     *, rng: Optional[np.random.Generator] = None,
                     step: int = 0, mean_return: float = 0.0,
                     explorer_coverage: float = 0.0
                     ) -> Tuple[MetricsRecord, EvalDetails]:
    """Evaluate without mutating the policy and keep per-episode detail."""
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 9173, step])
    oracle = DistanceOracle(env)
    successes: List[bool] = []
    paths: List[int] = []
    depths: List[int] = []
    optimal: List[int] = []
    for task in eval_tasks(env, cfg, rng):
        if env.kind == "lightsout":
            ok, path, pd = _eval_full_tree(env, policy, task, cfg.depth,
                                           cfg.k_reach, oracle)
            d_opt = oracle.distance(task.init, task.goal)
            successes.append(ok)
            paths.append(path)
            depths.append(pd)
            optimal.append(int(d_opt or 0))
        else:
            ok, path, pd, d_opt = _eval_stack_walk(env, policy, task, cfg,
                                                   oracle)
            successes.append(ok)
            paths.append(path)
            depths.append(pd)
            optimal.append(d_opt)
    details = EvalDetails(successes=successes, path_lengths=paths,
                          plan_depths=depths, optimal_lengths=optimal)
    good = details.success_paths
    record = MetricsRecord(
        step=step,
        success_rate=float(np.mean(successes)) if successes else 0.0,
        avg_path_length=float(np.mean(good)) if good else 0.0,
        path_length_std=float(np.std(good)) if good else 0.0,
        mean_return=mean_return,
        mean_plan_depth=float(np.mean(depths)) if depths else 0.0,
        explorer_coverage=explorer_coverage,
    )
    return record, details


def run_eval(policy: PlannerPolicy, env, cfg: ExperimentConfig,
             **kwargs) -> MetricsRecord:
    """Evaluation protocol; see run_eval_details for the mechanics."""
    record, _ = run_eval_details(policy, env, cfg, **kwargs)
    return record


class Trainer:
    """Owns the mutable state of one experiment so callers can stream
    metrics and still reach the trained tables afterwards."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.env = build_env(cfg)
        self.rng = np.random.default_rng(cfg.seed)
        self.oracle = DistanceOracle(self.env)
        candidates = tuple(self.env.states())
        scale = advantage_scale(cfg)
        self.policy = PlannerPolicy(
            candidates=candidates,
            entropy_coeff=cfg.entropy_coeff * scale,
            learning_rate=cfg.learning_rate / scale)
        self.values = ValueTable(default=return_floor(cfg))
        self.explorer_policy: Optional[ExplorerPolicy] = None
        self.triplet_table = TripletTable()
        self.explore_episodes: list = []
        self.offline_agent = None
        self.last_mean_return = 0.0

    # -- task sources -------------------------------------------------
    def _standard_task(self) -> Task:
        if self.env.kind == "lightsout":
            pool = sorted(self.env.solvable_set() - {self.env.goal_state})
            init = pool[int(self.rng.integers(len(pool)))]
            return Task(int(init), self.env.goal_state)
        return sample_task(self.env, self.rng, "min_distance",
                           d=self.cfg.task_min_distance)

    def _explorer_tasks(self, n: int) -> List[Task]:
        batch = max(1, self.cfg.batch_size // 8)
        random_goals = self.cfg.explorer_random_goals
        eps = run_exploration(self.env,
                              None if random_goals else self.explorer_policy,
                              batch, self.cfg.explore_horizon,
                              self.cfg.explore_coarse, self.rng,
                              table=self.triplet_table, worker=self.oracle,
                              random_goals=random_goals)
        self.explore_episodes.extend(eps)
        if not random_goals:
            update_explorer(self.explorer_policy, eps, self.cfg.returns)
        return tasks_from_dataset(self.explore_episodes, self.rng, n)

    # -- one training batch -------------------------------------------
    def _train_batch(self, tasks: Sequence[Task]) -> None:
        cfg = self.cfg
        trees = []
        for task in tasks:
            tree = unroll_training_tree(self.policy, task, cfg.depth,
                                        self.rng)
            mark_terminal(tree, self.env, cfg.k_reach)
            apply_reward_scheme(tree, cfg.reward_scheme, self.oracle)
            trees.append(tree)
        if cfg.reward_scheme == "gae":
            advs = [gae_advantages(t, self.values, cfg.returns)
                    for t in trees]
            self.last_mean_return = _update_from_advantages(
                self.policy, self.values, trees, advs)
        else:
            for tree in trees:
                compute_returns(tree, self.values, cfg.returns,
                                cfg.estimator)
            update_planner(self.policy, self.values, trees, cfg.returns)
            self.last_mean_return = float(np.mean([t.returns[0]
                                                   for t in trees]))

    # -- drivers --------------------------------------------------------
    def run(self) -> Iterator[MetricsRecord]:
        if self.cfg.mode == "explore-only":
            yield from self._run_explore_only()
        elif self.cfg.mode == "offline":
            yield from self._run_offline()
        else:
            yield from self._run_online()

    def _run_online(self) -> Iterator[MetricsRecord]:
        cfg = self.cfg
        if cfg.use_explorer:
            self.explorer_policy = ExplorerPolicy(
                candidates=tuple(self.env.states()))
        switch_at = int(cfg.explore_fraction * cfg.episodes)
        done = 0
        next_eval = cfg.eval_every if cfg.eval_every else None
        while done < cfg.episodes:
            n = min(cfg.batch_size, cfg.episodes - done)
            exploring = cfg.use_explorer and done < switch_at
            tasks = (self._explorer_tasks(n) if exploring
                     else [self._standard_task() for _ in range(n)])
            self._train_batch(tasks)
            done += n
            if next_eval is not None and done >= next_eval \
                    and done < cfg.episodes:
                yield self._snapshot(done)
                next_eval += cfg.eval_every
        yield self._snapshot(done)

    def _snapshot(self, step: int) -> MetricsRecord:
        return run_eval(self.policy, self.env, self.cfg, step=step,
                        mean_return=self.last_mean_return,
                        explorer_coverage=float(self.triplet_table.distinct))

    def _run_explore_only(self) -> Iterator[MetricsRecord]:
        cfg = self.cfg
        random_goals = cfg.explorer_random_goals
        if not random_goals:
            self.explorer_policy = ExplorerPolicy(
                candidates=tuple(self.env.states()))
        done = 0
        next_eval = cfg.eval_every if cfg.eval_every else None
        mean_novelty = 0.0
        while done < cfg.episodes:
            n = min(cfg.batch_size, cfg.episodes - done)
            eps = run_exploration(self.env, self.explorer_policy, n,
                                  cfg.explore_horizon, cfg.explore_coarse,
                                  self.rng, table=self.triplet_table,
                                  worker=self.oracle,
                                  random_goals=random_goals)
            self.explore_episodes.extend(eps)
            if not random_goals:
                update_explorer(self.explorer_policy, eps, cfg.returns)
            done += n
            mean_novelty = float(np.mean([ep.rewards.sum() for ep in eps]))
            record = MetricsRecord(
                step=done, success_rate=0.0, avg_path_length=0.0,
                path_length_std=0.0, mean_return=mean_novelty,
                mean_plan_depth=0.0,
                explorer_coverage=float(self.triplet_table.distinct))
            if next_eval is not None and done >= next_eval \
                    and done < cfg.episodes:
                yield record
                next_eval += cfg.eval_every
        yield MetricsRecord(step=done, success_rate=0.0,
                            avg_path_length=0.0, path_length_std=0.0,
                            mean_return=mean_novelty, mean_plan_depth=0.0,
                            explorer_coverage=float(
                                self.triplet_table.distinct))

    def _run_offline(self) -> Iterator[MetricsRecord]:
        from .offline import generate_offline_dataset

        cfg = self.cfg
        dataset = generate_offline_dataset(
            self.env, self.rng, max(cfg.episodes, 1),
            min_distance=cfg.task_min_distance)
        self.offline_agent = train_offline_agent(self.env, dataset,
                                                 cfg.offline, self.rng)
        agent = self.offline_agent
        erng = np.random.default_rng([cfg.seed, 5521])
        successes = []
        paths = []
        depths = []
        for _ in range(cfg.eval_episodes):
            task = sample_task(self.env, erng, "min_distance",
                               d=cfg.task_min_distance)
            d_opt = self.oracle.distance(task.init, task.goal) or 1
            final, steps, plans = rollout_offline(
                self.env, agent, task, 4 * d_opt,
                max_depth=cfg.infer_depth, mode="sample", rng=erng)
            successes.append(final == task.goal)
            paths.append(steps)
            depths.append(plans)
        good = [p for p, ok in zip(paths, successes) if ok]
        yield MetricsRecord(
            step=cfg.episodes,
            success_rate=float(np.mean(successes)),
            avg_path_length=float(np.mean(good)) if good else 0.0,
            path_length_std=float(np.std(good)) if good else 0.0,
            mean_return=0.0,
            mean_plan_depth=float(np.mean(depths)),
            explorer_coverage=0.0,
        )


def run_training(cfg: ExperimentConfig) -> Iterator[MetricsRecord]:
    """Stream metric records for one experiment; see Trainer for a handle
    that keeps the trained tables."""
    yield from Trainer(cfg).run()


@dataclass
class AblationRow:
    """Aggregate outcome of one configuration across seeds."""

    label: str
    seeds: Tuple[int, ...]
    success_mean: float
    success_std: float
    path_mean: float
    path_std: float
    success_by_seed: Tuple[float, ...]

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_ablation(configs: Sequence[ExperimentConfig],
                 seeds: Sequence[int] = (0, 1, 2)) -> List[AblationRow]:
    """Run every configuration across the seed set and aggregate the
    final evaluation of each run."""
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    rows = []
    for cfg in configs:
        finals = []
        for s in seeds:
            run_cfg = dataclasses.replace(cfg, seed=int(s))
            record = None
            for record in run_training(run_cfg):
                pass
            finals.append(record)
        succ = [r.success_rate for r in finals]
        path = [r.avg_path_length for r in finals]
        rows.append(AblationRow(
            label=f"{cfg.reward_scheme}-D{cfg.depth}",
            seeds=tuple(int(s) for s in seeds),
            success_mean=float(np.mean(succ)),
            success_std=float(np.std(succ)),
            path_mean=float(np.mean(path)),
            path_std=float(np.std(path)),
            success_by_seed=tuple(float(x) for x in succ),
        ))
    return rows


def config_to_json_dict(cfg: ExperimentConfig) -> dict:
    blob = dataclasses.asdict(cfg)
    return blob


def write_metrics(path: str, records: Sequence[MetricsRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")
