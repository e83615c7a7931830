"""Numerical verification of the properties the planner relies on.

Four facts make min-of-children returns trustworthy training targets,
and all four are checkable by brute force at small scale:

1. |min(a,b) - min(c,d)| <= max(|a-c|, |b-d|): the min backup never
   amplifies value differences.
2. The one-step backup is a gamma-contraction, and the lambda-mixed
   backup contracts with modulus gamma(1-lam)/(1-gamma*lam), so repeated
   backups converge to a unique fixed point.
3. Subtracting a state-only baseline from the return leaves the policy
   gradient unbiased: the empirical mean of baseline-weighted score
   functions is statistically zero.
4. Among all tree shapes over a fixed number of terminal leaves, the
   balanced split maximizes the root Monte Carlo return — splitting
   tasks evenly is not just aesthetic.
"""

import math

import numpy as np

from treeplan import (
    PlannerPolicy,
    ReturnConfig,
    Task,
    baseline_invariance_check,
    contraction_check,
    enumerate_tree_shapes,
    min_lemma_check,
    shape_height,
    shape_to_tree,
    tree_mc_return,
)


def main() -> None:
    rng = np.random.default_rng(0)
    cfg = ReturnConfig(gamma=0.95, lam=0.9)

    excess = min_lemma_check(100_000, rng)
    print(f"min lemma, 1e5 random quadruples: worst excess {excess:.2e}")

    report = contraction_check(cfg, 2000, rng)
    print(f"contraction, 2000 random backups: "
          f"one-step ratio {report.max_ratio_one_step:.4f} <= "
          f"{report.bound_one_step:.4f}, "
          f"lambda ratio {report.max_ratio_lambda:.4f} <= "
          f"{report.bound_lambda:.4f}, violations {report.violations}")

    policy = PlannerPolicy(candidates=(0, 1, 2))
    task = Task(0, 2)
    policy.row_for_update(task)[:] = [0.4, -0.2, 0.9]
    chk = baseline_invariance_check(policy, task, 50_000, rng,
                                    baseline_fn=lambda t: 3.0)
    inside = bool(np.all(np.abs(chk.mean_grad) <= 3 * chk.stderr))
    print(f"baseline invariance, 5e4 samples: |mean grad| "
          f"{np.abs(chk.mean_grad).max():.5f}, within 3 stderr: {inside}")

    for n_leaves in (4, 8):
        depth = max(shape_height(s) for s in enumerate_tree_shapes(n_leaves))
        rows = {}
        for shape in enumerate_tree_shapes(n_leaves):
            tree = shape_to_tree(shape, depth)
            rows.setdefault(shape_height(shape), []).append(
                float(tree_mc_return(tree, cfg)[0]))
        best_h = max(rows, key=lambda h: max(rows[h]))
        balanced_h = math.ceil(math.log2(n_leaves))
        print(f"{n_leaves}-leaf shapes: best root return "
              f"{max(rows[best_h]):.4f} at height {best_h} "
              f"(balanced height {balanced_h}); "
              f"balanced wins: {best_h == balanced_h}")


if __name__ == "__main__":
    main()
