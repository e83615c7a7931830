"""Train a planner on the 2x2 LightsOut puzzle in a few seconds.

LightsOut states are bitboards; pressing a cell toggles it and its
orthogonal neighbors, and the goal is all lights off. The planner never
learns button presses — it learns to split a (start, goal) task into
subgoal states until every leaf task is a single press. Training samples
solvable boards, builds a depth-5 plan tree per episode, scores nodes by
reachability, and follows the tree policy gradient.

Evaluation is single-attempt: expand the greedy plan tree once and count
it a success only if every branch bottoms out in a directly-reachable
step. The executed path length is the number of presses implied by the
plan's leaves.
"""

import time

from treeplan import ExperimentConfig, Trainer, run_eval_details


def main() -> None:
    cfg = ExperimentConfig(
        env_kind="lightsout",
        env_size=2,
        depth=5,
        infer_depth=5,
        episodes=600,
        eval_episodes=100,
        seed=0,
        entropy_coeff=0.5,
        learning_rate=0.05,
        batch_size=16,
    )
    trainer = Trainer(cfg)
    t0 = time.time()
    for record in trainer.run():
        print(f"episodes {record.step:>5}: "
              f"success {record.success_rate:.2f}  "
              f"mean path {record.avg_path_length:.2f}  "
              f"mean return {record.mean_return:+.3f}")
    print(f"trained in {time.time() - t0:.1f}s, "
          f"{len(trainer.policy.logits)} policy rows")

    _, details = run_eval_details(trainer.policy, trainer.env, cfg, step=0)
    succ = details.success_paths
    print(f"final: {sum(details.successes)}/{len(details.successes)} tasks, "
          f"mean successful path {sum(succ) / max(len(succ), 1):.2f} presses")


if __name__ == "__main__":
    main()
