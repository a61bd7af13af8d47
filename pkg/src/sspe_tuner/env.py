"""Markov-decision-process wrapper around the batch simulator.

State encoding, action codecs (full-grid "direct" and -1/0/+1 "delta"),
reward computation, SLO checks, and the episode lifecycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import simcore
from .errors import BoundsError, CodecError, DomainError, LifecycleError
from .simcore import (
    CostModelParams,
    ExecutorConfig,
    SimMetrics,
    WorkloadSpec,
    normalized_cost_rate,
)
from .telemetry import EventLogRecord

OBSERVATION_DIM = 9

REWARD_TIME_SCALE = 1000.0  # reward = alpha / (time_ms * scale): 1 / time in microseconds

DEFAULT_INITIAL_CONFIG = ExecutorConfig(cores=2, memory_mb=700, instances=6)

KNOB_NAMES = ("cores", "memory_mb", "instances")


@dataclass(frozen=True)
class RewardSpec:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise BoundsError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise BoundsError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class SloSpec:
    kind: str  # "max_latency_ms" or "min_throughput_tps"
    threshold: float

    def __post_init__(self):
        if self.kind not in ("max_latency_ms", "min_throughput_tps"):
            raise BoundsError(f"unknown SLO kind {self.kind!r}")
        if self.threshold <= 0:
            raise BoundsError(f"SLO threshold must be > 0, got {self.threshold}")


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


def compute_reward(processing_time_ms: float, cost_rate_norm: float, spec: RewardSpec) -> float:
    """Inverse-time reward minus a weighted cost penalty."""
    if processing_time_ms <= 0:
        raise DomainError(f"processing_time_ms must be > 0, got {processing_time_ms}")
    return spec.alpha / (REWARD_TIME_SCALE * processing_time_ms) - spec.beta * cost_rate_norm


def slo_satisfied(metrics: SimMetrics, slo: SloSpec) -> bool:
    """Thresholds are inclusive: latency <= max, throughput >= min."""
    if slo.kind == "max_latency_ms":
        return metrics.latency_ms <= slo.threshold
    return metrics.throughput_tps >= slo.threshold


def observation_from_scalars(
    fps: int,
    config: ExecutorConfig,
    processing_time_ms: float,
    cpu_util_pct: float,
    mem_util_pct: float,
    backpressure: bool,
) -> np.ndarray:
    """Build the 9-feature normalized observation vector; every entry lies in [0, 1]."""
    return np.array(
        [
            fps / simcore.FPS_MAX,
            config.cores / simcore.CORES_MAX,
            config.memory_mb / simcore.MEMORY_MAX,
            config.instances / simcore.INSTANCES_MAX,
            min(1.0, processing_time_ms / 2000.0),
            cpu_util_pct / 100.0,
            mem_util_pct / 100.0,
            1.0 if backpressure else 0.0,
            normalized_cost_rate(config),
        ],
        dtype=np.float64,
    )


def make_observation(
    workload: WorkloadSpec, config: ExecutorConfig, metrics: SimMetrics
) -> np.ndarray:
    return observation_from_scalars(
        workload.fps,
        config,
        metrics.processing_time_ms,
        metrics.cpu_util_pct,
        metrics.mem_util_pct,
        metrics.backpressure,
    )


class ActionCodec:
    """Bijection between action indices and executor configurations.

    direct mode: 72 actions, one per grid point, lexicographic in
    (cores, memory_mb, instances). delta mode: 3^k actions over k knobs,
    each knob stepping -1/0/+1 with clamping at the bounds.
    """

    KNOB_LEVELS = {
        "cores": tuple(range(simcore.CORES_MIN, simcore.CORES_MAX + 1)),
        "memory_mb": simcore.MEMORY_LEVELS,
        "instances": tuple(range(simcore.INSTANCES_MIN, simcore.INSTANCES_MAX + 1)),
    }

    def __init__(self, mode: str = "direct", knobs: tuple[str, ...] = KNOB_NAMES):
        if mode not in ("direct", "delta"):
            raise CodecError(f"unknown codec mode {mode!r}")
        for k in knobs:
            if k not in self.KNOB_LEVELS:
                raise CodecError(f"unknown knob {k!r}")
        self.mode = mode
        self.knobs = tuple(knobs)
        self._grid = simcore.executor_grid()
        self.cardinality = len(self._grid) if mode == "direct" else 3 ** len(self.knobs)

    def _check(self, action: int) -> None:
        if not 0 <= action < self.cardinality:
            raise CodecError(f"action {action} outside cardinality {self.cardinality}")

    def decode(self, action: int, current: ExecutorConfig | None = None) -> ExecutorConfig:
        """Map an action index to the configuration it selects.

        Delta mode requires the current configuration and clamps each stepped
        knob at its bounds, so every action is always legal.
        """
        self._check(action)
        if self.mode == "direct":
            return self._grid[action]
        if current is None:
            raise CodecError("delta decoding requires the current configuration")
        deltas = self.deltas_of(action)
        values = {k: getattr(current, k) for k in KNOB_NAMES}
        for knob, delta in zip(self.knobs, deltas):
            levels = self.KNOB_LEVELS[knob]
            idx = levels.index(values[knob]) + delta
            values[knob] = levels[min(len(levels) - 1, max(0, idx))]
        return ExecutorConfig(**values)

    def deltas_of(self, action: int) -> tuple[int, ...]:
        """Per-knob steps (-1/0/+1) encoded by a delta-mode action, base-3 big-endian."""
        self._check(action)
        if self.mode != "delta":
            raise CodecError("deltas_of applies to delta mode only")
        digits = []
        rest = action
        for _ in self.knobs:
            digits.append(rest % 3 - 1)
            rest //= 3
        return tuple(reversed(digits))

    def encode(self, config: ExecutorConfig) -> int:
        """Inverse of direct-mode decode."""
        if self.mode != "direct":
            raise CodecError("encode(config) applies to direct mode only")
        return self._grid.index(config)

    def encode_deltas(self, deltas: tuple[int, ...]) -> int:
        if self.mode != "delta":
            raise CodecError("encode_deltas applies to delta mode only")
        if len(deltas) != len(self.knobs):
            raise CodecError(f"expected {len(self.knobs)} deltas, got {len(deltas)}")
        action = 0
        for d in deltas:
            if d not in (-1, 0, 1):
                raise CodecError(f"delta must be -1, 0, or +1, got {d}")
            action = action * 3 + (d + 1)
        return action

    @property
    def noop_action(self) -> int:
        if self.mode != "delta":
            raise CodecError("noop_action applies to delta mode only")
        return self.encode_deltas((0,) * len(self.knobs))


@dataclass(frozen=True)
class WorkloadModel:
    """Pin-or-range sampling model for each workload field.

    Each field is either a fixed integer or an inclusive (lo, hi) range
    sampled uniformly at episode reset. Draw order: fps, partitions, frames.
    """

    fps: int | tuple[int, int] = (simcore.FPS_MIN, simcore.FPS_MAX)
    partitions: int | tuple[int, int] = (simcore.PARTITIONS_MIN, simcore.PARTITIONS_MAX)
    frames_per_partition: int | tuple[int, int] = (simcore.FRAMES_MIN, simcore.FRAMES_MAX)

    def sample(self, rng: np.random.Generator) -> WorkloadSpec:
        def draw(spec) -> int:
            if isinstance(spec, tuple):
                lo, hi = spec
                return int(rng.integers(lo, hi + 1))
            return int(spec)

        return WorkloadSpec(
            fps=draw(self.fps),
            partitions=draw(self.partitions),
            frames_per_partition=draw(self.frames_per_partition),
        )

    def pinned(self, fps: int) -> "WorkloadModel":
        return WorkloadModel(
            fps=fps, partitions=self.partitions, frames_per_partition=self.frames_per_partition
        )


class Environment:
    """Single-agent tuning environment over the batch simulator.

    All randomness (workload sampling and per-step simulation seeds) flows
    from the seed or Generator given at construction. Each step may emit an
    EventLogRecord through `event_sink`.
    """

    def __init__(
        self,
        params: CostModelParams,
        codec: ActionCodec,
        reward_spec: RewardSpec,
        seed: int | np.random.Generator,
        *,
        horizon: int = 100,
        workload_model: WorkloadModel | None = None,
        initial_config: ExecutorConfig = DEFAULT_INITIAL_CONFIG,
        slo: SloSpec | None = None,
        event_sink: Callable[[EventLogRecord], None] | None = None,
    ):
        if horizon < 1:
            raise BoundsError(f"horizon must be >= 1, got {horizon}")
        self.params = params
        self.codec = codec
        self.reward_spec = reward_spec
        self.horizon = horizon
        self.workload_model = workload_model or WorkloadModel()
        self.initial_config = initial_config
        self.slo = slo
        self.event_sink = event_sink
        self._rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

        self.config = initial_config
        self.workload: WorkloadSpec | None = None
        self.last_metrics: SimMetrics | None = None
        self.episode = 0
        self.step_index = 0  # within the current episode
        self.global_step = 0
        self._done = True
        self._context = {"epsilon": 0.0, "loss": None}

    def set_context(self, epsilon: float | None = None, loss: float | None = None) -> None:
        """Training-loop context recorded on the next emitted event record."""
        if epsilon is not None:
            self._context["epsilon"] = epsilon
        self._context["loss"] = loss

    def _draw_seed(self) -> int:
        return int(self._rng.integers(0, 2**63))

    def _run_batch(self) -> SimMetrics:
        assert self.workload is not None
        return simcore.simulate_batch(self.config, self.workload, self.params, self._draw_seed())

    def reset(self) -> np.ndarray:
        """Start an episode: resample the workload, restore the initial config,
        and probe it once so the observation carries real metrics."""
        self.episode += 1
        self.step_index = 0
        self._done = False
        self.config = self.initial_config
        self.workload = self.workload_model.sample(self._rng)
        self.last_metrics = self._run_batch()
        return make_observation(self.workload, self.config, self.last_metrics)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise LifecycleError("step() called after the episode finished; call reset()")
        if self.codec.mode == "direct":
            self.config = self.codec.decode(action)
        else:
            self.config = self.codec.decode(action, self.config)

        metrics = self._run_batch()
        self.last_metrics = metrics
        reward = compute_reward(
            metrics.processing_time_ms, metrics.infra_cost_rate, self.reward_spec
        )

        self.step_index += 1
        self.global_step += 1
        self._done = self.step_index >= self.horizon
        obs = make_observation(self.workload, self.config, metrics)

        if self.event_sink is not None:
            self.event_sink(self._make_record(action, metrics, reward))
        return obs, reward, self._done

    def _make_record(self, action: int, metrics: SimMetrics, reward: float) -> EventLogRecord:
        assert self.workload is not None
        return EventLogRecord(
            ts=self.global_step,
            episode=self.episode,
            step=self.step_index,
            fps=self.workload.fps,
            partitions=self.workload.partitions,
            frames_per_partition=self.workload.frames_per_partition,
            cores=self.config.cores,
            memory_mb=self.config.memory_mb,
            instances=self.config.instances,
            processing_time_ms=metrics.processing_time_ms,
            reward=reward,
            epsilon=self._context["epsilon"],
            loss=self._context["loss"],
            cpu_util_pct=metrics.cpu_util_pct,
            mem_util_pct=metrics.mem_util_pct,
            contention=simcore.contention_factor(
                self.config.cores, self.config.instances, self.params.phys_cores
            ),
            action_index=action,
            applied=True,
        )
