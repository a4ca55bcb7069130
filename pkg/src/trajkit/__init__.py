"""Trajectory prediction with interaction encoding, selective state-space
decoding, reward learning from demonstrations, and a bounded policy head
for out-of-distribution scenes."""

from .config import RunConfig, load_config, save_config
from .data import (
    PredictionInstance,
    Recording,
    SplitSpec,
    prepare_dataset,
    synth_scenario,
)
from .domain import AgentState, Trajectory, window_instances
from .errors import (
    CheckpointError,
    DegenerateNormalization,
    DivergenceError,
    InvalidInput,
    SchemaError,
    TrainingError,
    TrajkitError,
)
from .metrics import (
    CsaInput,
    MetricReport,
    compute_metrics,
    csa_score,
    csa_table,
    emit_report,
    metrics_from_instances,
    radar_chart,
    read_report,
)
from .policy import (
    PolicyParams,
    TD3Config,
    build_replay,
    load_policy,
    ood_predict,
    save_policy,
    td3_train,
)
from .reward import (
    DemonstrationSet,
    RewardParams,
    estimate_logZ,
    init_reward_params,
    loss_rf,
    reward,
    trajectory_return,
)
from .training import (
    TpmParams,
    TrainConfig,
    TrainResult,
    ablation_grid,
    evaluate_instances,
    load_checkpoint,
    loss_tpm,
    predict_positions,
    predict_states,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "CheckpointError",
    "CsaInput",
    "DegenerateNormalization",
    "DemonstrationSet",
    "DivergenceError",
    "InvalidInput",
    "MetricReport",
    "PolicyParams",
    "PredictionInstance",
    "Recording",
    "RewardParams",
    "RunConfig",
    "SchemaError",
    "SplitSpec",
    "TD3Config",
    "TpmParams",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "Trajectory",
    "TrajkitError",
    "ablation_grid",
    "build_replay",
    "compute_metrics",
    "csa_score",
    "csa_table",
    "emit_report",
    "estimate_logZ",
    "evaluate_instances",
    "init_reward_params",
    "load_checkpoint",
    "load_config",
    "load_policy",
    "loss_rf",
    "loss_tpm",
    "metrics_from_instances",
    "ood_predict",
    "predict_positions",
    "predict_states",
    "prepare_dataset",
    "radar_chart",
    "read_report",
    "reward",
    "save_checkpoint",
    "save_config",
    "save_policy",
    "synth_scenario",
    "td3_train",
    "train",
    "trajectory_return",
    "window_instances",
]
