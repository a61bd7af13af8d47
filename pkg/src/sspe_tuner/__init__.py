"""sspe-tuner: a seedable simulator of a serverless stream-processing cluster
plus a DQN auto-tuner (single-agent and five-role multi-agent modes)."""

from . import dqn, env, madrl, simcore, telemetry
from .simcore import (
    ClusterSpec,
    CostModelParams,
    ExecutorConfig,
    SimMetrics,
    Topology,
    VmSpec,
    WorkloadSpec,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterSpec",
    "CostModelParams",
    "ExecutorConfig",
    "SimMetrics",
    "Topology",
    "VmSpec",
    "WorkloadSpec",
    "dqn",
    "env",
    "madrl",
    "simcore",
    "telemetry",
]
