"""Command line entry point.

Subcommands:
  train        run a training experiment, write metrics and checkpoints
  eval         evaluate a saved policy checkpoint
  ablate       run a configuration across seeds and print the table
  oracle-check run the independent verification suite, exit 1 on failure
  explore      collect exploration trajectories into a JSONL dataset

The default output directory is taken from the TREEPLAN_OUT_DIR
environment variable when --out is not given (falling back to the
current directory).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .envs import DistanceOracle
from .explorer import ExplorerPolicy, TripletTable, run_exploration, \
    save_episodes, update_explorer
from .harness import (ExperimentConfig, Trainer, build_env, run_ablation,
                      run_eval_details)
from .oracle import (contraction_check, enumerate_tree_shapes,
                     min_lemma_check, oracle_tree_return,
                     random_tree_trajectory, shape_height)
from .policy import load_policy, save_policy, save_values
from .returns import (ReturnConfig, tree_lambda_return, tree_mc_return,
                      tree_one_step_return)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("TREEPLAN_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=("lightsout", "maze"),
                   default="lightsout", help="environment family")
    p.add_argument("--size", type=int, default=2,
                   help="board side length / rooms per maze side")
    p.add_argument("--depth", type=int, default=5,
                   help="training tree depth")
    p.add_argument("--infer-depth", type=int, default=8,
                   help="inference refinement budget")
    p.add_argument("--gamma", type=float, default=0.95,
                   help="tree discount")
    p.add_argument("--lambda", dest="lam", type=float, default=0.95,
                   help="mixing weight for the lambda estimator")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--reward-scheme",
                   choices=("default", "neg_rew", "dist_sum", "gae"),
                   default="default", help="reward ablation scheme")
    p.add_argument("--mode", choices=("online", "offline", "explore-only"),
                   default="online", help="training regime")
    p.add_argument("--estimator", choices=("lambda", "mc", "one_step"),
                   default="lambda", help="return estimator")
    p.add_argument("--episodes", type=int, default=2000,
                   help="training budget (plan trees, or expert episodes "
                        "in offline mode)")
    p.add_argument("--eval-episodes", type=int, default=100,
                   help="evaluation episode count")
    p.add_argument("--batch-size", type=int, default=16,
                   help="trees per gradient step")
    p.add_argument("--entropy", type=float, default=0.5,
                   help="entropy bonus weight")
    p.add_argument("--lr", type=float, default=0.05, help="learning rate")
    p.add_argument("--k-reach", type=int, default=1,
                   help="worker reachability radius")
    p.add_argument("--min-distance", type=int, default=1,
                   help="minimum task distance for maze/offline sampling")
    p.add_argument("--use-explorer", action="store_true",
                   help="draw early training tasks from exploration data")
    p.add_argument("--explorer-random-goals", action="store_true",
                   help="exploration data uses uniform random goals "
                        "instead of the trained explorer")
    p.add_argument("--eval-every", type=int, default=0,
                   help="evaluate every N training episodes (0 = end only)")
    p.add_argument("--out", default=None, help="output directory")


def _config_from(args) -> ExperimentConfig:
    return ExperimentConfig(
        env_kind=args.env,
        env_size=args.size,
        depth=args.depth,
        infer_depth=args.infer_depth,
        returns=ReturnConfig(gamma=args.gamma, lam=args.lam),
        learning_rate=args.lr,
        entropy_coeff=args.entropy,
        episodes=args.episodes,
        eval_episodes=args.eval_episodes,
        seed=args.seed,
        mode=args.mode,
        reward_scheme=args.reward_scheme,
        estimator=args.estimator,
        k_reach=args.k_reach,
        batch_size=args.batch_size,
        eval_every=args.eval_every,
        use_explorer=args.use_explorer,
        explorer_random_goals=args.explorer_random_goals,
        task_min_distance=args.min_distance,
    )


def _summary_blob(record, details) -> dict:
    succ = details.success_paths
    return {
        "success_rate": record.success_rate,
        "avg_path_length_successful": float(np.mean(succ)) if succ else 0.0,
        "path_length_std_successful": float(np.std(succ)) if succ else 0.0,
        "avg_path_length_all": float(np.mean(details.path_lengths))
        if details.path_lengths else 0.0,
        "path_length_std_all": float(np.std(details.path_lengths))
        if details.path_lengths else 0.0,
        "mean_plan_depth": record.mean_plan_depth,
        "explorer_coverage": record.explorer_coverage,
        "optimality_ratio": details.optimality_ratio(),
    }


def cmd_train(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(args)
    trainer = Trainer(cfg)
    records = []
    t0 = time.time()
    for record in trainer.run():
        records.append(record)
        print(f"step {record.step:>7}  success {record.success_rate:6.3f}  "
              f"path {record.avg_path_length:7.2f}  "
              f"return {record.mean_return:8.3f}  "
              f"coverage {record.explorer_coverage:7.0f}")
    elapsed = time.time() - t0
    with open(out / "metrics.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")
    final = records[-1]
    if cfg.mode == "online":
        _, details = run_eval_details(trainer.policy, trainer.env, cfg,
                                      step=final.step,
                                      mean_return=final.mean_return,
                                      explorer_coverage=float(
                                          trainer.triplet_table.distinct))
        summary = _summary_blob(final, details)
        save_policy(trainer.policy, str(out / "policy.json"))
        save_values(trainer.values, str(out / "values.json"))
    else:
        summary = final.to_json_dict()
    summary["elapsed_seconds"] = elapsed
    summary["config"] = {k: (dataclasses.asdict(v)
                             if dataclasses.is_dataclass(v) else v)
                         for k, v in dataclasses.asdict(cfg).items()}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"wrote {out / 'metrics.jsonl'} and {out / 'summary.json'} "
          f"({elapsed:.1f}s)")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(args)
    env = build_env(cfg)
    policy = load_policy(args.policy)
    record, details = run_eval_details(policy, env, cfg, step=0)
    summary = _summary_blob(record, details)
    print(json.dumps(summary, indent=2))
    with open(out / "eval.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(args)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    schemes = args.schemes.split(",")
    configs = [dataclasses.replace(cfg, reward_scheme=s) for s in schemes]
    rows = run_ablation(configs, seeds)
    blob = [r.to_json_dict() for r in rows]
    print(f"{'label':<16} {'success':>16} {'path':>16}")
    for r in rows:
        print(f"{r.label:<16} {r.success_mean:8.3f}±{r.success_std:6.3f} "
              f"{r.path_mean:8.2f}±{r.path_std:6.2f}")
    with open(out / "ablation.json", "w") as fh:
        json.dump(blob, fh, indent=2)
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    cfg = ReturnConfig(gamma=args.gamma, lam=args.lam)
    failures = 0

    report = contraction_check(cfg, args.trials, rng)
    ok = report.violations == 0
    failures += 0 if ok else 1
    print(f"contraction: {report.trials} trials, "
          f"one-step ratio {report.max_ratio_one_step:.6f} <= {cfg.gamma}, "
          f"lambda ratio {report.max_ratio_lambda:.6f} <= "
          f"{report.bound_lambda:.6f} -> {'ok' if ok else 'FAIL'}")

    excess = min_lemma_check(args.trials * 10, rng)
    ok = excess <= 1e-12
    failures += 0 if ok else 1
    print(f"min-lemma: {args.trials * 10} quadruples, "
          f"max excess {excess:.2e} -> {'ok' if ok else 'FAIL'}")

    worst = 0.0
    for _ in range(200):
        depth = int(rng.integers(1, 5))
        tree = random_tree_trajectory(rng, depth)
        table = {(t.init, t.goal): float(rng.uniform(0, 2))
                 for t in tree.nodes}
        values = lambda t: table[(t.init, t.goal)]
        for kind, fast in (("mc", lambda: tree_mc_return(tree, cfg)),
                           ("one_step",
                            lambda: tree_one_step_return(tree, values, cfg)),
                           ("lambda",
                            lambda: tree_lambda_return(tree, values, cfg))):
            slow = oracle_tree_return(tree, values, cfg, kind)
            worst = max(worst, float(np.max(np.abs(fast() - slow))))
    ok = worst <= 1e-12
    failures += 0 if ok else 1
    print(f"return equivalence: max abs error {worst:.2e} <= 1e-12 "
          f"-> {'ok' if ok else 'FAIL'}")

    bad_shapes = 0
    for leaves in (4, 8):
        shapes = enumerate_tree_shapes(leaves)
        heights = [shape_height(s) for s in shapes]
        if min(heights) != int(np.ceil(np.log2(leaves))):
            bad_shapes += 1
    ok = bad_shapes == 0
    failures += 0 if ok else 1
    print(f"balanced shapes: minimum height matches ceil(log2(L)) for "
          f"4- and 8-leaf trees -> {'ok' if ok else 'FAIL'}")

    print("oracle check:", "all ok" if failures == 0 else
          f"{failures} suite(s) FAILED")
    return 0 if failures == 0 else 1


def cmd_explore(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(args)
    env = build_env(cfg)
    rng = np.random.default_rng(cfg.seed)
    table = TripletTable()
    policy = None if args.random_goals else ExplorerPolicy(
        candidates=tuple(env.states()))
    worker = DistanceOracle(env)
    episodes = []
    remaining = cfg.episodes
    while remaining > 0:
        n = min(cfg.batch_size, remaining)
        eps = run_exploration(env, policy, n, args.horizon, args.coarse,
                              rng, table=table,
                              random_goals=args.random_goals, worker=worker)
        episodes.extend(eps)
        if policy is not None:
            update_explorer(policy, eps, cfg.returns)
        remaining -= n
    path = out / "exploration.jsonl"
    save_episodes(str(path), episodes)
    mean_novelty = float(np.mean([ep.rewards.sum() for ep in episodes]))
    print(f"collected {len(episodes)} episodes, "
          f"{table.distinct} distinct triplets, "
          f"mean episode novelty {mean_novelty:.3f}")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeplan",
        description="Hierarchical subgoal-tree planner on exact discrete "
                    "environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a planner")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved policy")
    _add_common(p_eval)
    p_eval.add_argument("--policy", required=True,
                        help="policy checkpoint JSON")
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="reward-scheme ablation")
    _add_common(p_abl)
    p_abl.add_argument("--schemes", default="default,neg_rew,dist_sum,gae",
                       help="comma-separated reward schemes")
    p_abl.add_argument("--seeds", default="0,1,2",
                       help="comma-separated seeds")
    p_abl.set_defaults(func=cmd_ablate)

    p_orc = sub.add_parser("oracle-check",
                           help="independent verification suite")
    p_orc.add_argument("--trials", type=int, default=10_000,
                       help="contraction trials (min-lemma runs 10x)")
    p_orc.add_argument("--gamma", type=float, default=0.95)
    p_orc.add_argument("--lambda", dest="lam", type=float, default=0.95)
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.set_defaults(func=cmd_oracle_check)

    p_exp = sub.add_parser("explore", help="collect exploration data")
    _add_common(p_exp)
    p_exp.add_argument("--horizon", type=int, default=64,
                       help="raw steps per episode")
    p_exp.add_argument("--coarse", type=int, default=8,
                       help="raw steps per goal decision")
    p_exp.add_argument("--random-goals", action="store_true",
                       help="uniform random goal baseline")
    p_exp.set_defaults(func=cmd_explore)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
