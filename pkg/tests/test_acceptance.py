"""Acceptance run: one test per headline claim, one printed verdict line
per claim with the measured numbers (run with -s to see the lines live).

Budgets, seeds, and tolerances are frozen; every random stream is
seeded, so the measured numbers reproduce exactly. One claim is known
not to hold at desk scale and its test fails honestly rather than being
weakened: the novelty explorer's coverage edge over random goal choice
(claim 10a) caps near 1.05x on every 5x5 room maze configuration tried,
because a shortest-path worker makes the landing map deterministic and
random goals already cover such small strongly-connected mazes nearly
optimally; the required 1.2x margin is not reachable. Its companion
claim 10b (a planner trained on explorer data matches the random-data
planner) does hold and is asserted separately.
"""

import math
import time

import numpy as np
import pytest

from treeplan.envs import DistanceOracle, Task, default_maze
from treeplan.harness import ExperimentConfig, Trainer, run_eval_details
from treeplan.offline import (GoalBuffer, HierValues, OfflineConfig,
                              expectile_loss, expectile_loss_grad,
                              fps_update, generate_offline_dataset,
                              rollout_offline, train_flat_baseline,
                              train_offline_agent)
from treeplan.oracle import (contraction_check, enumerate_tree_shapes,
                             min_lemma_check, oracle_tree_return,
                             random_tree_trajectory, shape_height,
                             shape_to_tree)
from treeplan.policy import PlannerPolicy, baseline_invariance_check
from treeplan.returns import (ReturnConfig, tree_lambda_return,
                              tree_mc_return, tree_one_step_return)


def _verdict(tag: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    print(f"\n{line}", flush=True)
    return line


def _train_and_eval(cfg: ExperimentConfig):
    trainer = Trainer(cfg)
    record = None
    for record in trainer.run():
        pass
    _, details = run_eval_details(trainer.policy, trainer.env, cfg, step=0)
    return trainer, record, details


# ------------------------------------------------------------------ 01
def test_01_toggle_board_size2_solved_exactly():
    """Size-2 toggle board: 100% success over 100 held-out tasks under
    single-attempt full-tree scoring at depth 5; mean successful path in
    [2.0, 3.0] presses; end to end under 5 minutes."""
    t0 = time.time()
    cfg = ExperimentConfig(env_kind="lightsout", env_size=2, depth=5,
                           infer_depth=5, episodes=600, eval_episodes=100,
                           seed=0, entropy_coeff=0.5, learning_rate=0.05,
                           batch_size=16)
    _, _, details = _train_and_eval(cfg)
    succ = float(np.mean(details.successes))
    good = details.success_paths
    path = float(np.mean(good)) if good else float("nan")
    took = time.time() - t0
    ok = succ == 1.0 and 2.0 <= path <= 3.0 and took < 300
    line = _verdict("01 toggle board size 2",
                    ok, f"success {succ:.2%} (need 100%), mean path "
                        f"{path:.2f} (need [2.0, 3.0]), {took:.0f}s "
                        f"(need <300s)")
    assert ok, line


# ------------------------------------------------------------------ 02
def test_02_toggle_board_size3_mostly_solved():
    """Size-3 toggle board: success >= 80%, mean successful path <= 5
    presses, under 30 minutes."""
    t0 = time.time()
    cfg = ExperimentConfig(env_kind="lightsout", env_size=3, depth=5,
                           infer_depth=5, episodes=130_000,
                           eval_episodes=100, seed=0, entropy_coeff=0.01,
                           learning_rate=0.2, batch_size=16)
    _, _, details = _train_and_eval(cfg)
    succ = float(np.mean(details.successes))
    good = details.success_paths
    path = float(np.mean(good)) if good else float("nan")
    took = time.time() - t0
    ok = succ >= 0.80 and path <= 5.0 and took < 1800
    line = _verdict("02 toggle board size 3",
                    ok, f"success {succ:.2%} (need >=80%), mean path "
                        f"{path:.2f} (need <=5), {took:.0f}s (need <1800s)")
    assert ok, line


# ------------------------------------------------------------------ 03
def test_03_maze_corner_tasks_at_near_optimal_length():
    """25-room maze: 100% of corner-class tasks solved by stack
    inference plus greedy walking; mean executed length <= 1.3x the true
    shortest path."""
    cfg = ExperimentConfig(env_kind="maze", env_size=5, depth=5,
                           infer_depth=8, episodes=4000, eval_episodes=100,
                           seed=0, entropy_coeff=0.5, learning_rate=0.05,
                           batch_size=16, task_min_distance=2)
    _, _, details = _train_and_eval(cfg)
    succ = float(np.mean(details.successes))
    walked = float(np.mean(details.path_lengths))
    optimal = float(np.mean(details.optimal_lengths))
    ratio = walked / optimal
    ok = succ == 1.0 and ratio <= 1.3
    line = _verdict("03 maze corner tasks",
                    ok, f"success {succ:.2%} (need 100%), executed/optimal "
                        f"{ratio:.3f} (need <=1.3)")
    assert ok, line


# ------------------------------------------------------------------ 04
def test_04_training_depth_does_not_matter_at_inference():
    """Training at depth 1 or 3 and planning at depth 8 stays within 5
    percentage points of the depth-5 agent (mean over 3 seeds)."""
    rates = {}
    for depth in (1, 3, 5):
        runs = []
        for seed in (0, 1, 2):
            cfg = ExperimentConfig(env_kind="maze", env_size=5, depth=depth,
                                   infer_depth=8, episodes=3000,
                                   eval_episodes=100, seed=seed,
                                   entropy_coeff=0.5, learning_rate=0.05,
                                   batch_size=16, task_min_distance=2)
            _, _, details = _train_and_eval(cfg)
            runs.append(float(np.mean(details.successes)))
        rates[depth] = float(np.mean(runs))
    gap1 = abs(rates[1] - rates[5])
    gap3 = abs(rates[3] - rates[5])
    ok = gap1 <= 0.05 and gap3 <= 0.05
    line = _verdict("04 depth generalization",
                    ok, f"mean success d1 {rates[1]:.3f}, d3 {rates[3]:.3f},"
                        f" d5 {rates[5]:.3f}; gaps {gap1:.3f}/{gap3:.3f} "
                        f"(need <=0.05)")
    assert ok, line


# ------------------------------------------------------------------ 05
def test_05_backup_operators_contract():
    """10^4 random value-pair backups: the one-step ratio never exceeds
    gamma and the lambda-mixed ratio never exceeds
    gamma(1-lam)/(1-gamma*lam); under a minute."""
    t0 = time.time()
    cfg = ReturnConfig()
    report = contraction_check(cfg, 10_000, np.random.default_rng(0))
    took = time.time() - t0
    ok = (report.violations == 0
          and report.max_ratio_one_step <= report.bound_one_step + 1e-12
          and report.max_ratio_lambda <= report.bound_lambda + 1e-12
          and took < 60)
    line = _verdict("05 backup contraction",
                    ok, f"one-step {report.max_ratio_one_step:.4f} <= "
                        f"{report.bound_one_step:.4f}, lambda "
                        f"{report.max_ratio_lambda:.4f} <= "
                        f"{report.bound_lambda:.4f}, violations "
                        f"{report.violations} (need 0), {took:.1f}s")
    assert ok, line


# ------------------------------------------------------------------ 06
def test_06_min_never_amplifies_differences():
    """10^6 random quadruples: |min(a,b)-min(c,d)| <= max(|a-c|,|b-d|)
    with zero violations; under 10 seconds."""
    t0 = time.time()
    excess = min_lemma_check(1_000_000, np.random.default_rng(0))
    took = time.time() - t0
    ok = excess <= 0.0 and took < 10
    line = _verdict("06 min backup lemma",
                    ok, f"worst excess {excess:.2e} (need <=0) over 1e6 "
                        f"quadruples, {took:.1f}s (need <10s)")
    assert ok, line


# ------------------------------------------------------------------ 07
def test_07_state_baseline_leaves_gradient_unbiased():
    """A constant baseline injected into the score-function estimator
    leaves the mean gradient within 3 standard errors of zero at 10^5
    samples on a 3-candidate policy."""
    policy = PlannerPolicy(candidates=(0, 1, 2))
    task = Task(0, 2)
    policy.row_for_update(task)[:] = [0.4, -0.2, 0.9]
    chk = baseline_invariance_check(policy, task, 100_000,
                                    np.random.default_rng(0),
                                    baseline_fn=lambda t: 3.0)
    worst = float(np.max(np.abs(chk.mean_grad) / chk.stderr))
    ok = bool(np.all(np.abs(chk.mean_grad) <= 3 * chk.stderr))
    line = _verdict("07 baseline invariance",
                    ok, f"max |mean|/stderr {worst:.2f} (need <=3) at 1e5 "
                        f"samples")
    assert ok, line


# ------------------------------------------------------------------ 08
def test_08_returns_match_independent_recursion():
    """All three return estimators agree with the independent recursive
    oracle to 1e-12 on 1000 random trees of depth <= 5, and the lambda
    estimator reduces exactly to its endpoints."""
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        depth = int(rng.integers(1, 6))
        tree = random_tree_trajectory(rng, depth)
        vals = {(t.init, t.goal): float(rng.random()) for t in tree.nodes}
        v = lambda task: vals[(task.init, task.goal)]
        cfg = ReturnConfig(gamma=float(rng.uniform(0.5, 0.99)),
                           lam=float(rng.uniform(0.0, 1.0)))
        for got, want in (
                (tree_mc_return(tree, cfg),
                 oracle_tree_return(tree, None, cfg, "mc")),
                (tree_one_step_return(tree, v, cfg),
                 oracle_tree_return(tree, v, cfg, "one_step")),
                (tree_lambda_return(tree, v, cfg),
                 oracle_tree_return(tree, v, cfg, "lambda"))):
            worst = max(worst, float(np.max(np.abs(got - want))))
        lo = ReturnConfig(gamma=cfg.gamma, lam=0.0)
        hi = ReturnConfig(gamma=cfg.gamma, lam=1.0)
        exact0 = np.array_equal(tree_lambda_return(tree, v, lo),
                                tree_one_step_return(tree, v, lo))
        exact1 = np.array_equal(tree_lambda_return(tree, v, hi),
                                tree_mc_return(tree, hi, leaf_values=v))
        assert exact0 and exact1, "lambda endpoint reduction not exact"
    ok = worst <= 1e-12
    line = _verdict("08 return-oracle equivalence",
                    ok, f"worst |estimator - oracle| {worst:.2e} (need "
                        f"<=1e-12) over 1000 trees; lambda in {{0,1}} "
                        f"reductions exact")
    assert ok, line


# ------------------------------------------------------------------ 09
def test_09_balanced_split_maximizes_root_return():
    """Exhaustive enumeration of every full binary tree shape on 4 and 8
    unit-reward leaves: no shape beats the balanced one at the root."""
    counterexamples = 0
    detail = []
    for n_leaves in (4, 8):
        shapes = enumerate_tree_shapes(n_leaves)
        host = max(shape_height(s) for s in shapes)
        balanced_h = math.ceil(math.log2(n_leaves))
        cfg = ReturnConfig(gamma=0.95, lam=0.9)
        returns = {}
        for shape in shapes:
            tree = shape_to_tree(shape, host)
            returns[shape] = float(tree_mc_return(tree, cfg)[0])
        best_balanced = max(r for s, r in returns.items()
                            if shape_height(s) == balanced_h)
        counterexamples += sum(r > best_balanced for r in returns.values())
        detail.append(f"{n_leaves} leaves: {len(shapes)} shapes, balanced "
                      f"root return {best_balanced:.4f} unbeaten")
    ok = counterexamples == 0
    line = _verdict("09 balanced-split dominance",
                    ok, "; ".join(detail) + f"; counterexamples "
                        f"{counterexamples} (need 0)")
    assert ok, line


# ------------------------------------------------------------------ 10a
def test_10a_explorer_coverage_edge_over_random_goals():
    """Novelty explorer vs uniform random goals at an equal 600-episode
    budget on the 5x5 maze, cumulative distinct-window coverage, 3
    seeds: the claim requires a >=1.2x ratio. Known not to hold at this
    scale (measured ceiling ~1.05x across layouts, budgets, and window
    sizes): a shortest-path worker makes landings deterministic and
    random goals already near-cover a 25-room strongly-connected maze,
    so this test fails honestly."""
    cover = {True: [], False: []}
    for trained in (True, False):
        for seed in (0, 1, 2):
            cfg = ExperimentConfig(env_kind="maze", env_size=5,
                                   mode="explore-only", episodes=600,
                                   eval_episodes=1, seed=seed,
                                   explore_horizon=64, explore_coarse=8,
                                   batch_size=16,
                                   explorer_random_goals=not trained)
            trainer = Trainer(cfg)
            record = None
            for record in trainer.run():
                pass
            cover[trained].append(record.explorer_coverage)
    ratio = float(np.mean(cover[True]) / np.mean(cover[False]))
    ok = ratio >= 1.2
    line = _verdict("10a explorer coverage edge",
                    ok, f"trained/random coverage ratio {ratio:.3f} "
                        f"(need >=1.2); trained {cover[True]}, random "
                        f"{cover[False]}")
    assert ok, line


# ------------------------------------------------------------------ 10b
def test_10b_planner_on_explorer_data_matches_random_data():
    """Planners trained with a 30% exploration phase: drawing those
    exploration tasks from the novelty explorer's trajectories matches
    or exceeds drawing them from random-goal trajectories, mean success
    over 3 seeds."""
    rates = {}
    for random_goals in (False, True):
        runs = []
        for seed in (0, 1, 2):
            cfg = ExperimentConfig(env_kind="maze", env_size=5, depth=5,
                                   infer_depth=8, episodes=3000,
                                   eval_episodes=100, seed=seed,
                                   entropy_coeff=0.5, learning_rate=0.05,
                                   batch_size=16, task_min_distance=2,
                                   use_explorer=True,
                                   explorer_random_goals=random_goals,
                                   explore_fraction=0.3)
            _, _, details = _train_and_eval(cfg)
            runs.append(float(np.mean(details.successes)))
        rates[random_goals] = float(np.mean(runs))
    ok = rates[False] >= rates[True]
    line = _verdict("10b planner on explorer data",
                    ok, f"explorer-data success {rates[False]:.3f} vs "
                        f"random-data {rates[True]:.3f} (need >=)")
    assert ok, line


# ------------------------------------------------------------------ 11
def test_11_offline_stitching_beats_flat_cloning():
    """Short noisy-expert demonstrations (2-6 rooms) on the 7x7 maze:
    the offline hierarchical agent beats flat advantage-weighted cloning
    by >=10 percentage points on every seed over 100 tasks of true
    distance >=8; expectile gradients match finite differences to 1e-5;
    farthest-point sampling on a 1-D chain equals the exhaustive
    argmax-min selection exactly."""
    # expectile gradient vs central finite differences, away from the kink
    h, worst_fd = 1e-6, 0.0
    for tau in (0.6, 0.7, 0.9, 0.95):
        for u in (-2.0, -0.5, -1e-3, 1e-3, 0.7, 3.0):
            fd = (expectile_loss(u + h, tau) - expectile_loss(u - h, tau)) \
                / (2 * h)
            worst_fd = max(worst_fd, abs(fd - expectile_loss_grad(u, tau)))
    assert worst_fd <= 1e-5, f"expectile gradient off by {worst_fd:.2e}"

    # farthest-point sampling on the 1-D chain vs exhaustive argmax-min
    cfg9 = OfflineConfig(buffer_capacity=9)
    values9 = HierValues(cfg9)
    for a in range(9):
        for b in range(9):
            values9.v_low[(a, b)] = 100.0 * (0.99 ** abs(a - b))
    buf = GoalBuffer(capacity=9)
    fps_update(buf, list(range(9)), values9)
    reference = [0]
    while len(reference) < 9:
        scored = [(min(-values9.vl(c, b) for b in reference), -c)
                  for c in range(9) if c not in reference]
        reference.append(-max(scored)[1])
    assert buf.landmarks == reference, \
        f"chain selection {buf.landmarks} != exhaustive {reference}"

    env = default_maze(7)
    oracle = DistanceOracle(env)
    states = list(env.states())
    far = [(a, b) for a in states for b in states
           if oracle.distance(a, b) >= 8]
    idx = np.random.default_rng(42).choice(len(far), size=100,
                                           replace=False)
    tasks = [far[j] for j in idx]
    ocfg = OfflineConfig(gamma_l=0.9, worker_horizon=8)
    gaps = []
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        data = generate_offline_dataset(env, rng, 600, min_distance=2,
                                        max_distance=6)
        agent = train_offline_agent(env, data, ocfg, rng, rounds=12,
                                    high_steps=20_000, low_steps=20_000)
        _, flat_actor = train_flat_baseline(
            env, data, ocfg, np.random.default_rng(seed + 1000),
            rounds=12, low_steps=20_000)
        prng = np.random.default_rng([seed, 7])
        hier = flat = 0
        for init, goal in tasks:
            budget = 4 * oracle.distance(init, goal)
            final, _, _ = rollout_offline(env, agent, Task(init, goal),
                                          budget, mode="sample", rng=prng)
            hier += final == goal
            s = init
            for _ in range(budget):
                if s == goal:
                    break
                s = int(env.step(s, flat_actor.greedy(Task(s, goal)).index))
            flat += s == goal
        gaps.append((hier / 100, flat / 100))
    ok = all(h >= f + 0.10 for h, f in gaps)
    shown = ", ".join(f"seed{i}: {h:.2f} vs {f:.2f} ({h - f:+.2f})"
                      for i, (h, f) in enumerate(gaps))
    line = _verdict("11 offline stitching",
                    ok, f"{shown} (need every gap >=+0.10); expectile "
                        f"grad err {worst_fd:.1e} <=1e-5; chain selection "
                        f"exact")
    assert ok, line


# ------------------------------------------------------------------ 12
def test_12_reward_scheme_directions():
    """Size-3 toggle board at an equal 30k-episode budget, 3 seeds:
    shifting every node reward down by one (pure cost) lands within 5
    points of the default scheme's mean success, while replacing rewards
    with negated solve-distances is strictly worse."""
    means = {}
    detail = []
    for scheme in ("default", "neg_rew", "dist_sum"):
        runs = []
        for seed in (0, 1, 2):
            cfg = ExperimentConfig(env_kind="lightsout", env_size=3,
                                   depth=5, infer_depth=5, episodes=30_000,
                                   eval_episodes=100, seed=seed,
                                   entropy_coeff=0.01, learning_rate=0.2,
                                   batch_size=16, reward_scheme=scheme)
            _, _, details = _train_and_eval(cfg)
            runs.append(float(np.mean(details.successes)))
        means[scheme] = float(np.mean(runs))
        detail.append(f"{scheme} {means[scheme]:.3f} "
                      f"({'/'.join(f'{r:.2f}' for r in runs)})")
    gap = abs(means["neg_rew"] - means["default"])
    ok = gap <= 0.05 and means["dist_sum"] < means["default"]
    line = _verdict("12 reward-scheme directions",
                    ok, "; ".join(detail) + f"; |neg-default| {gap:.3f} "
                        f"(need <=0.05), dist_sum strictly worse: "
                        f"{means['dist_sum'] < means['default']}")
    assert ok, line
