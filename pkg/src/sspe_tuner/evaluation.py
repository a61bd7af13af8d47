"""Policy evaluation: greedy-vs-random comparison at each frame rate, greedy
rollout summaries, and the exhaustive configuration oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import simcore
from .config import RunConfig
from .dqn import QNetwork
from .env import ActionCodec, Environment, WorkloadModel, slo_satisfied
from .errors import NoDataError, ShapeError
from .simcore import WorkloadSpec
from .training import running_average

Policy = Callable[[np.ndarray], int]


@dataclass
class CompareRow:
    fps: int
    drl_mean_ms: float
    random_mean_ms: float
    improvement_pct: float
    drl_mean_cores: float
    drl_mean_memory_mb: float
    drl_mean_instances: float
    agent_decision_overhead_ms: float


@dataclass
class OracleRow:
    fps: int
    best_cores: int
    best_memory_mb: int
    best_instances: int
    best_time_ms: float
    worst_time_ms: float
    mean_time_ms: float


def greedy_policy(net: QNetwork) -> Policy:
    return lambda obs: int(np.argmax(net.forward(obs)))


def random_policy(cardinality: int, rng: np.random.Generator) -> Policy:
    return lambda obs: int(rng.integers(cardinality))


def oracle_policy(config: RunConfig, codec: ActionCodec) -> Policy:
    """Pins the noise-free optimum for the observed frame rate (direct mode)."""
    if codec.mode != "direct":
        raise ShapeError("the oracle policy requires the direct codec")
    cache: dict[int, int] = {}

    def policy(obs: np.ndarray) -> int:
        fps = round(obs[0] * simcore.FPS_MAX)
        if fps not in cache:
            workload = WorkloadSpec(fps=fps, partitions=5, frames_per_partition=10)
            best, _ = simcore.brute_force_optimum(workload, config.params)
            cache[fps] = codec.encode(best)
        return cache[fps]

    return policy


def oracle_table(config: RunConfig, fps_values: tuple[int, ...] | None = None) -> list[OracleRow]:
    """Exhaustive statistics over the 72-point grid, noise-free by construction."""
    rows = []
    for fps in fps_values or config.eval_fps_values:
        times = [
            simcore.batch_time_ms(c, fps, config.params) for c in simcore.executor_grid()
        ]
        best, best_t = simcore.brute_force_optimum(
            WorkloadSpec(fps=fps, partitions=5, frames_per_partition=10), config.params
        )
        rows.append(
            OracleRow(
                fps=fps,
                best_cores=best.cores,
                best_memory_mb=best.memory_mb,
                best_instances=best.instances,
                best_time_ms=best_t,
                worst_time_ms=max(times),
                mean_time_ms=float(np.mean(times)),
            )
        )
    return rows


@dataclass
class EvalSeries:
    times_ms: list[float]
    cores: list[float]
    memory_mb: list[float]
    instances: list[float]
    decision_overhead_ms: float


def _eval_env(config: RunConfig, fps: int, seed_key: int) -> Environment:
    codec = ActionCodec(mode=config.codec_mode)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, fps, seed_key)))
    return Environment(
        config.params,
        codec,
        config.reward,
        rng,
        horizon=1,
        workload_model=config.workload.pinned(fps),
        initial_config=config.initial_config,
        slo=config.slo,
    )


def run_eval_batches(config: RunConfig, policy: Policy, fps: int, batches: int) -> EvalSeries:
    """Single-step evaluation episodes: reset, one decision, one batch.

    Environments for the same (config.seed, fps) share the seed stream, so two
    policies evaluated here face identical workloads and noise draws.
    """
    env = _eval_env(config, fps, seed_key=0)
    series = EvalSeries([], [], [], [], 0.0)
    decided = 0.0
    for _ in range(batches):
        obs = env.reset()
        t0 = time.perf_counter()
        action = policy(obs)
        decided += time.perf_counter() - t0
        env.step(action)
        assert env.last_metrics is not None
        series.times_ms.append(env.last_metrics.processing_time_ms)
        series.cores.append(env.config.cores)
        series.memory_mb.append(env.config.memory_mb)
        series.instances.append(env.config.instances)
    series.decision_overhead_ms = 1000.0 * decided / max(1, batches)
    return series


def compare(
    config: RunConfig,
    policy: Policy,
    *,
    baseline: Policy | None = None,
    fps_values: tuple[int, ...] | None = None,
    batches: int | None = None,
) -> list[CompareRow]:
    """Evaluate a policy against a uniform-random chooser on paired seeds."""
    cardinality = ActionCodec(mode=config.codec_mode).cardinality
    batches = batches or config.eval_batches
    rows = []
    for fps in fps_values or config.eval_fps_values:
        drl = run_eval_batches(config, policy, fps, batches)
        if baseline is None:
            rand_rng = np.random.default_rng(np.random.SeedSequence((config.seed, fps, 7919)))
            base_policy = random_policy(cardinality, rand_rng)
        else:
            base_policy = baseline
        rand = run_eval_batches(config, base_policy, fps, batches)
        drl_mean = float(np.mean(drl.times_ms))
        rand_mean = float(np.mean(rand.times_ms))
        rows.append(
            CompareRow(
                fps=fps,
                drl_mean_ms=drl_mean,
                random_mean_ms=rand_mean,
                improvement_pct=100.0 * (rand_mean - drl_mean) / rand_mean,
                drl_mean_cores=float(np.mean(drl.cores)),
                drl_mean_memory_mb=float(np.mean(drl.memory_mb)),
                drl_mean_instances=float(np.mean(drl.instances)),
                agent_decision_overhead_ms=drl.decision_overhead_ms,
            )
        )
    return rows


@dataclass
class EvalSummary:
    steps: int
    final_running_avg: float
    plateau_stat: float
    slo_satisfaction_rate: float | None
    mean_reward: float
    training_final_running_avg: float | None = None
    training_plateau_stat: float | None = None


def plateau_statistic(run_avg: np.ndarray, tail_fraction: float = 0.2) -> float:
    """Std/mean of the running average over the final fraction of steps."""
    if len(run_avg) == 0:
        raise NoDataError("no data")
    tail = run_avg[int(len(run_avg) * (1 - tail_fraction)) :]
    mean = float(np.mean(tail))
    if mean == 0.0:
        return float("inf")
    return float(np.std(tail) / abs(mean))


def evaluate(config: RunConfig, net: QNetwork) -> EvalSummary:
    """Greedy rollout (epsilon = 0) over the configured evaluation budget."""
    codec = ActionCodec(mode=config.codec_mode)
    if net.input_dim != 9 or net.n_actions != codec.cardinality:
        raise ShapeError(
            f"checkpoint net ({net.input_dim} -> {net.n_actions}) does not match "
            f"environment (9 -> {codec.cardinality})"
        )
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 104729)))
    env = Environment(
        config.params,
        codec,
        config.reward,
        rng,
        horizon=config.horizon,
        workload_model=config.workload,
        initial_config=config.initial_config,
        slo=config.slo,
    )
    policy = greedy_policy(net)
    rewards: list[float] = []
    slo_hits = 0
    steps = 0
    for _ in range(config.eval_episodes):
        obs = env.reset()
        done = False
        while not done:
            obs, reward, done = env.step(policy(obs))
            rewards.append(reward)
            steps += 1
            if config.slo is not None and env.last_metrics is not None:
                slo_hits += int(slo_satisfied(env.last_metrics, config.slo))
    if steps == 0:
        raise NoDataError("no data: evaluation produced zero steps")
    run_avg = running_average(np.asarray(rewards))
    return EvalSummary(
        steps=steps,
        final_running_avg=float(run_avg[-1]),
        plateau_stat=plateau_statistic(run_avg),
        slo_satisfaction_rate=(slo_hits / steps) if config.slo is not None else None,
        mean_reward=float(np.mean(rewards)),
    )


def training_curve_stats(run_dir: Path) -> tuple[float, float]:
    """Final running-average reward and plateau statistic of a recorded run."""
    from .training import read_rewards_csv

    data = read_rewards_csv(run_dir / "rewards.csv")
    run_avg = data["running_avg_1000"]
    return float(run_avg[-1]), plateau_statistic(run_avg)
