"""Tree plans and their return estimators, end to end on a toy task.

A plan is a dense binary tree of (init, goal) tasks: the root is the
whole task, and each internal node is split by a chosen subgoal into a
left half (init -> subgoal) and a right half (subgoal -> goal). A node
whose goal is within the worker's reach is terminal; its reward is 1 and
its cost-to-go is 0. The value of an internal node is the min over its
two children of reward + gamma * (child estimate): a plan is only as
good as its weakest branch.

This demo builds one small plan on a 2x2 LightsOut board, marks
reachability, and walks through the three return estimators, checking
each against the independent recursive oracle.
"""

import numpy as np

from treeplan import (
    DistanceOracle,
    LightsOut,
    PlannerPolicy,
    ReturnConfig,
    Task,
    mark_terminal,
    oracle_tree_return,
    tree_lambda_return,
    tree_mc_return,
    tree_one_step_return,
    unroll_training_tree,
)


def main() -> None:
    rng = np.random.default_rng(7)
    env = LightsOut(2)
    oracle = DistanceOracle(env)

    # A depth-3 plan sampled from an untrained (uniform) policy; training
    # would sharpen the subgoal choices, but the return machinery is
    # policy-agnostic.
    policy = PlannerPolicy(candidates=tuple(env.states()))
    task = Task(max(env.solvable_set()), env.goal_state)
    tree = unroll_training_tree(policy, task, 3, rng)
    print(f"plan tree: {tree.n_nodes} nodes, root task "
          f"{task.init} -> {task.goal} "
          f"(true distance {oracle.distance(task.init, task.goal)})")

    mark_terminal(tree, env, k_reach=1)
    print(f"terminal nodes: {int(tree.terminal.sum())} of {tree.n_nodes}")
    print(f"rewards (level order): {tree.rewards.astype(int).tolist()}")

    cfg = ReturnConfig(gamma=0.95, lam=0.9)
    values = lambda node: 0.25  # a deliberately boring critic

    for name, fn, kind in [
        ("monte carlo", lambda: tree_mc_return(tree, cfg), "mc"),
        ("one-step", lambda: tree_one_step_return(tree, values, cfg),
         "one_step"),
        ("lambda-mixed", lambda: tree_lambda_return(tree, values, cfg),
         "lambda"),
    ]:
        got = fn()
        want = oracle_tree_return(tree, None if kind == "mc" else values,
                                  cfg, kind)
        err = float(np.max(np.abs(got - want)))
        print(f"{name:>12}: root return {got[0]:+.4f}   "
              f"oracle agreement {err:.2e}")

    # The lambda estimator really is the bridge between the other two.
    lo = ReturnConfig(gamma=0.95, lam=0.0)
    hi = ReturnConfig(gamma=0.95, lam=1.0)
    a = tree_lambda_return(tree, values, lo)
    b = tree_one_step_return(tree, values, lo)
    print(f"lam=0 equals one-step: {np.allclose(a, b)}")
    a = tree_lambda_return(tree, values, hi)
    b = tree_mc_return(tree, hi, leaf_values=values)
    print(f"lam=1 equals bootstrapped monte carlo: {np.allclose(a, b)}")


if __name__ == "__main__":
    main()
