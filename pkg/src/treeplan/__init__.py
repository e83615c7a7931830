"""treeplan: hierarchical planning by recursive subgoal trees on exact
discrete environments, with brute-force oracles for every estimate."""

from .envs import (DistanceOracle, LightsOut, MazeLayout, RoomMaze, Task,
                   default_maze, generate_maze_layout, load_maze_layout,
                   reachable, sample_task, save_maze_layout)
from .explorer import (NULL_STATE, ExplorationEpisode, ExplorerPolicy,
                       MemoryBuffer, TripletTable, exploration_reward,
                       extract_memory, load_episodes, memory_view_from_coarse,
                       run_exploration, save_episodes, tasks_from_dataset,
                       update_explorer)
from .harness import (AblationRow, EvalDetails, ExperimentConfig,
                      MetricsRecord, Trainer, apply_reward_scheme, build_env,
                      gae_advantages, run_ablation, run_eval,
                      run_eval_details, run_training)
from .offline import (GoalBuffer, HierValues, OfflineAgent, OfflineConfig,
                      awr_weight, execute_stack, expectile_loss,
                      expectile_loss_grad, fps_update,
                      generate_offline_dataset, high_advantage,
                      load_offline_dataset, offline_plan, retrieve_landmark,
                      rollout_offline,
                      save_offline_dataset, train_flat_baseline,
                      train_high_value, train_low_value_and_actors,
                      train_offline_agent)
from .oracle import (ContractionReport, bfs_distance, contraction_check,
                     enumerate_tree_shapes, fixed_point_iterations,
                     min_lemma_check, optimal_plan_depth, oracle_tree_return,
                     plan_depth_closed_form, random_tree_mdp,
                     random_tree_trajectory, shape_height, shape_to_tree)
from .policy import (BaselineCheck, GradientReport, PlannerPolicy, ValueTable,
                     baseline_invariance_check, compute_advantages,
                     load_policy, load_values, policy_sample, save_policy,
                     save_values, update_planner)
from .returns import (ReturnConfig, TreeMdp, bellman_operator,
                      linear_lambda_return, tree_lambda_return,
                      tree_mc_return, tree_one_step_return)
from .tree import (SubgoalChoice, SubgoalStack, TreeTrajectory, mark_terminal,
                   unroll_inference, unroll_training_tree)

__version__ = "0.1.0"

__all__ = [
    "DistanceOracle", "LightsOut", "MazeLayout", "RoomMaze", "Task",
    "default_maze", "generate_maze_layout", "load_maze_layout", "reachable",
    "sample_task", "save_maze_layout",
    "NULL_STATE", "ExplorationEpisode", "ExplorerPolicy", "MemoryBuffer",
    "TripletTable", "exploration_reward", "extract_memory", "load_episodes",
    "memory_view_from_coarse", "run_exploration", "save_episodes",
    "tasks_from_dataset", "update_explorer",
    "AblationRow", "EvalDetails", "ExperimentConfig", "MetricsRecord",
    "Trainer", "apply_reward_scheme", "build_env", "gae_advantages",
    "run_ablation", "run_eval", "run_eval_details", "run_training",
    "GoalBuffer", "HierValues", "OfflineAgent", "OfflineConfig", "awr_weight",
    "execute_stack", "expectile_loss", "expectile_loss_grad", "fps_update",
    "generate_offline_dataset", "high_advantage", "load_offline_dataset",
    "offline_plan", "retrieve_landmark", "rollout_offline",
    "save_offline_dataset",
    "train_flat_baseline", "train_high_value", "train_low_value_and_actors",
    "train_offline_agent",
    "ContractionReport", "bfs_distance", "contraction_check",
    "enumerate_tree_shapes", "fixed_point_iterations", "min_lemma_check",
    "optimal_plan_depth", "oracle_tree_return", "plan_depth_closed_form",
    "random_tree_mdp", "random_tree_trajectory", "shape_height",
    "shape_to_tree",
    "BaselineCheck", "GradientReport", "PlannerPolicy", "ValueTable",
    "baseline_invariance_check", "compute_advantages", "load_policy",
    "load_values", "policy_sample", "save_policy", "save_values",
    "update_planner",
    "ReturnConfig", "TreeMdp", "bellman_operator", "linear_lambda_return",
    "tree_lambda_return", "tree_mc_return", "tree_one_step_return",
    "SubgoalChoice", "SubgoalStack", "TreeTrajectory", "mark_terminal",
    "unroll_inference", "unroll_training_tree",
    "__version__",
]
