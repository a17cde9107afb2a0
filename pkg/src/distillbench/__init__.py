"""Policy distillation workbench.

Train a DQN expert on classic control tasks, distill it into hard
decision trees, soft decision trees, and RBF kernel machines, and
compare all of them on fidelity (value-function NRMSE, policy accuracy)
and raw performance (mean reward with confidence intervals).
"""

__version__ = "0.1.0"

from .dataset import (
    LabeledDataset,
    SplitDataset,
    balance_classes,
    collect_demonstrations,
    load_dataset_csv,
    save_dataset_csv,
    stratified_split,
)
from .dqn import DqnConfig, QPolicy, ReplayBuffer, train_dqn
from .envs import (
    CartPole,
    DoneReason,
    EnvSpec,
    EpisodeTrace,
    MountainCar,
    RewardScheme,
    StepResult,
    grid_states,
    make_env,
    rollout,
)
from .hard_tree import HardTree, train_hard_tree
from .kernel_machine import KernelMachine, KmConfig, rbf_kernel, train_kernel_machine
from .metrics import (
    EvalConfig,
    EvfTable,
    MetricsReport,
    estimate_evf,
    evaluate_all,
    nrmse,
    performance_ci,
    policy_accuracy,
)
from .nn import Adam, Mlp, count_parameters
from .persistence import ModelParseError, load_model, parse_model, save_model, serialize_model
from .pipeline import (
    ExperimentConfig,
    StageError,
    config_from_dict,
    load_config,
    run_pipeline,
    stage_seed,
)
from .soft_tree import SdtConfig, SoftTree, soft_tree_param_count, train_soft_tree

__all__ = [
    "Adam",
    "CartPole",
    "DoneReason",
    "DqnConfig",
    "EnvSpec",
    "EpisodeTrace",
    "EvalConfig",
    "EvfTable",
    "ExperimentConfig",
    "HardTree",
    "KernelMachine",
    "KmConfig",
    "LabeledDataset",
    "MetricsReport",
    "Mlp",
    "ModelParseError",
    "MountainCar",
    "QPolicy",
    "ReplayBuffer",
    "RewardScheme",
    "SdtConfig",
    "SoftTree",
    "SplitDataset",
    "StageError",
    "StepResult",
    "balance_classes",
    "collect_demonstrations",
    "config_from_dict",
    "count_parameters",
    "estimate_evf",
    "evaluate_all",
    "grid_states",
    "load_config",
    "load_dataset_csv",
    "load_model",
    "make_env",
    "nrmse",
    "parse_model",
    "performance_ci",
    "policy_accuracy",
    "rbf_kernel",
    "rollout",
    "run_pipeline",
    "save_dataset_csv",
    "save_model",
    "serialize_model",
    "soft_tree_param_count",
    "stage_seed",
    "stratified_split",
    "train_dqn",
    "train_hard_tree",
    "train_kernel_machine",
    "train_soft_tree",
]
