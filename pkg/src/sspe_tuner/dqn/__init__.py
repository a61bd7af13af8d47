"""Deep Q-network learner: network, replay, checkpointing, offline pretraining.

The hot MLP kernels come from a compiled extension when present, with a numpy
fallback chosen at import (see _backend.BACKEND_NAME).
"""

from ._backend import BACKEND_NAME
from .checkpoint import load_checkpoint, load_checkpoint_full, save_checkpoint
from .network import (
    Hyperparams,
    QNetwork,
    bellman_targets,
    decay_epsilon,
    forward,
    grad_check,
    select_action,
    train_step,
)
from .pretrain import pretrain_from_trace, transitions_from_trace
from .replay import ReplayBuffer

__all__ = [
    "BACKEND_NAME",
    "Hyperparams",
    "QNetwork",
    "ReplayBuffer",
    "bellman_targets",
    "decay_epsilon",
    "forward",
    "grad_check",
    "load_checkpoint",
    "load_checkpoint_full",
    "pretrain_from_trace",
    "save_checkpoint",
    "select_action",
    "train_step",
    "transitions_from_trace",
]
