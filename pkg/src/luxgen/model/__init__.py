"""From-scratch encoder-decoder transformer with training and decoding."""

from .config import (
    ConfigError,
    ModelConfig,
    TrainConfig,
    desk_preset,
    finetune_defaults,
    paper_preset,
    pretrain_defaults,
)
from .decoding import DecodeConfig, generate, generate_ids
from .network import Tensor, forward, init, loss, parameter_count, shift_right
from .training import (
    AdamState,
    Checkpoint,
    TrainingDiverged,
    TrainingError,
    adam_step,
    constant_schedule,
    encode_task_pairs,
    finetune,
    gradients,
    initial_checkpoint,
    make_schedule,
    pretrain,
    warmup_schedule,
)

__all__ = [
    "AdamState",
    "Checkpoint",
    "ConfigError",
    "DecodeConfig",
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "TrainingError",
    "adam_step",
    "constant_schedule",
    "desk_preset",
    "encode_task_pairs",
    "finetune",
    "finetune_defaults",
    "forward",
    "generate",
    "generate_ids",
    "gradients",
    "init",
    "initial_checkpoint",
    "loss",
    "make_schedule",
    "paper_preset",
    "parameter_count",
    "pretrain",
    "pretrain_defaults",
    "shift_right",
    "warmup_schedule",
]
