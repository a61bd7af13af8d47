"""Run configuration: one JSON document validated in full before anything runs.

Every invariant violation is collected and reported with its field path;
unknown keys are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import simcore
from .dqn import Hyperparams
from .env import DEFAULT_INITIAL_CONFIG, RewardSpec, SloSpec, WorkloadModel
from .errors import ConfigValidationError
from .madrl import DEFAULT_DELAYS_MS, AgentRole
from .simcore import ClusterSpec, CostModelParams, ExecutorConfig, VmSpec

DEFAULT_FPS_VALUES = (10, 20, 30, 40, 50, 60)


@dataclass
class MadrlSettings:
    roster: tuple[AgentRole, ...]
    delays: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_DELAYS_MS))
    slo_penalty: float = 1e-6
    max_vms: int = 6


@dataclass
class RunConfig:
    seed: int
    out_dir: str
    params: CostModelParams
    cluster: ClusterSpec
    workload: WorkloadModel
    codec_mode: str
    horizon: int
    initial_config: ExecutorConfig
    reward: RewardSpec
    slo: SloSpec | None
    hyper: Hyperparams
    agents: MadrlSettings | None
    checkpoint_interval: int
    pretrain_trace: str | None
    eval_batches: int
    eval_fps_values: tuple[int, ...]
    eval_episodes: int
    raw: dict[str, Any] = field(default_factory=dict)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class _Validator:
    def __init__(self):
        self.violations: list[str] = []

    def err(self, path: str, msg: str) -> None:
        self.violations.append(f"{path}: {msg}")

    def reject_unknown(self, obj: dict, path: str, allowed: set[str]) -> None:
        for key in obj:
            if key not in allowed:
                self.err(f"{path}.{key}" if path else key, "unknown key")

    def get_int(self, obj: dict, path: str, key: str, default, lo=None, hi=None):
        val = obj.get(key, default)
        where = f"{path}.{key}" if path else key
        if isinstance(val, bool) or not isinstance(val, int):
            self.err(where, f"expected an integer, got {val!r}")
            return default
        if lo is not None and val < lo:
            self.err(where, f"must be >= {lo}, got {val}")
        if hi is not None and val > hi:
            self.err(where, f"must be <= {hi}, got {val}")
        return val

    def get_num(self, obj: dict, path: str, key: str, default, lo=None, lo_strict=None, hi=None):
        val = obj.get(key, default)
        where = f"{path}.{key}" if path else key
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.err(where, f"expected a number, got {val!r}")
            return default
        if lo is not None and val < lo:
            self.err(where, f"must be >= {lo}, got {val}")
        if lo_strict is not None and val <= lo_strict:
            self.err(where, f"must be > {lo_strict}, got {val}")
        if hi is not None and val > hi:
            self.err(where, f"must be <= {hi}, got {val}")
        return float(val)

    def get_bool(self, obj: dict, path: str, key: str, default):
        val = obj.get(key, default)
        if not isinstance(val, bool):
            self.err(f"{path}.{key}" if path else key, f"expected a boolean, got {val!r}")
            return default
        return val

    def get_str(self, obj: dict, path: str, key: str, default, choices=None):
        val = obj.get(key, default)
        where = f"{path}.{key}" if path else key
        if not isinstance(val, str):
            self.err(where, f"expected a string, got {val!r}")
            return default
        if choices is not None and val not in choices:
            self.err(where, f"must be one of {sorted(choices)}, got {val!r}")
        return val


def _pin_or_range(v: _Validator, obj: dict, path: str, key: str, lo: int, hi: int, default):
    val = obj.get(key, default)
    where = f"{path}.{key}"
    if isinstance(val, tuple):
        return val
    if isinstance(val, bool):
        v.err(where, f"expected an integer or [lo, hi] pair, got {val!r}")
        return default
    if isinstance(val, int):
        if not lo <= val <= hi:
            v.err(where, f"must be in [{lo},{hi}], got {val}")
        return val
    if isinstance(val, list):
        if (
            len(val) != 2
            or any(isinstance(x, bool) or not isinstance(x, int) for x in val)
            or val[0] > val[1]
        ):
            v.err(where, f"range must be [lo, hi] with lo <= hi, got {val!r}")
            return default
        if val[0] < lo or val[1] > hi:
            v.err(where, f"range must lie within [{lo},{hi}], got {val}")
        return (val[0], val[1])
    v.err(where, f"expected an integer or [lo, hi] pair, got {val!r}")
    return default


def load_config(path: str | Path, *, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigValidationError([f"{path}: unreadable config: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigValidationError([f"{path}: top level must be a JSON object"])
    if seed is not None:
        doc["seed"] = seed
    if out_dir is not None:
        doc["out_dir"] = out_dir
    return parse_config(doc)


def parse_config(doc: dict[str, Any]) -> RunConfig:
    """Validate a raw config dict in full; raises ConfigValidationError listing
    every violation, or returns the resolved RunConfig."""
    v = _Validator()
    v.reject_unknown(
        doc, "", {"seed", "out_dir", "sim", "workload", "env", "learner", "agents",
                  "train", "eval"},
    )

    seed = v.get_int(doc, "", "seed", 0, lo=0)
    out_dir = v.get_str(doc, "", "out_dir", "runs/run")

    sim = doc.get("sim", {})
    if not isinstance(sim, dict):
        v.err("sim", "expected an object")
        sim = {}
    v.reject_unknown(
        sim, "sim",
        {"k0", "k1", "k2", "phys_cores", "noise_sigma", "noise_enabled", "frame_mb", "cluster"},
    )
    k0 = v.get_num(sim, "sim", "k0", 50.0, lo=0)
    k1 = v.get_num(sim, "sim", "k1", 96.0, lo=0)
    k2 = v.get_num(sim, "sim", "k2", 20.0, lo=0)
    phys_cores = v.get_int(sim, "sim", "phys_cores", 12, lo=1)
    noise_sigma = v.get_num(sim, "sim", "noise_sigma", 0.05, lo=0)
    noise_enabled = v.get_bool(sim, "sim", "noise_enabled", True)
    frame_mb = v.get_num(sim, "sim", "frame_mb", 2.0, lo_strict=0)

    cluster_obj = sim.get("cluster", {})
    if not isinstance(cluster_obj, dict):
        v.err("sim.cluster", "expected an object")
        cluster_obj = {}
    v.reject_unknown(cluster_obj, "sim.cluster", {"workers", "vcpus", "ram_mb", "hourly_cost"})
    workers = v.get_int(cluster_obj, "sim.cluster", "workers", 3, lo=1)
    vcpus = v.get_int(cluster_obj, "sim.cluster", "vcpus", 4, lo=1)
    ram_mb = v.get_int(cluster_obj, "sim.cluster", "ram_mb", 8192, lo=1)
    hourly_cost = v.get_num(cluster_obj, "sim.cluster", "hourly_cost", 0.20, lo=0)

    workload_obj = doc.get("workload", {})
    if not isinstance(workload_obj, dict):
        v.err("workload", "expected an object")
        workload_obj = {}
    v.reject_unknown(workload_obj, "workload", {"fps", "partitions", "frames_per_partition"})
    fps = _pin_or_range(
        v, workload_obj, "workload", "fps", simcore.FPS_MIN, simcore.FPS_MAX,
        (simcore.FPS_MIN, simcore.FPS_MAX),
    )
    partitions = _pin_or_range(
        v, workload_obj, "workload", "partitions", simcore.PARTITIONS_MIN,
        simcore.PARTITIONS_MAX, (simcore.PARTITIONS_MIN, simcore.PARTITIONS_MAX),
    )
    frames = _pin_or_range(
        v, workload_obj, "workload", "frames_per_partition", simcore.FRAMES_MIN,
        simcore.FRAMES_MAX, (simcore.FRAMES_MIN, simcore.FRAMES_MAX),
    )

    env_obj = doc.get("env", {})
    if not isinstance(env_obj, dict):
        v.err("env", "expected an object")
        env_obj = {}
    v.reject_unknown(env_obj, "env", {"codec", "horizon", "initial_config", "reward", "slo"})
    codec_mode = v.get_str(env_obj, "env", "codec", "direct", choices={"direct", "delta"})
    horizon = v.get_int(env_obj, "env", "horizon", 100, lo=1)

    init_obj = env_obj.get("initial_config", {})
    if not isinstance(init_obj, dict):
        v.err("env.initial_config", "expected an object")
        init_obj = {}
    v.reject_unknown(init_obj, "env.initial_config", {"cores", "memory_mb", "instances"})
    init_cores = v.get_int(
        init_obj, "env.initial_config", "cores", DEFAULT_INITIAL_CONFIG.cores,
        lo=simcore.CORES_MIN, hi=simcore.CORES_MAX,
    )
    init_mem = v.get_int(
        init_obj, "env.initial_config", "memory_mb", DEFAULT_INITIAL_CONFIG.memory_mb,
        lo=simcore.MEMORY_MIN, hi=simcore.MEMORY_MAX,
    )
    if init_mem % simcore.MEMORY_STEP != 0:
        v.err("env.initial_config.memory_mb", f"must be a multiple of {simcore.MEMORY_STEP}")
    init_inst = v.get_int(
        init_obj, "env.initial_config", "instances", DEFAULT_INITIAL_CONFIG.instances,
        lo=simcore.INSTANCES_MIN, hi=simcore.INSTANCES_MAX,
    )

    reward_obj = env_obj.get("reward", {})
    if not isinstance(reward_obj, dict):
        v.err("env.reward", "expected an object")
        reward_obj = {}
    v.reject_unknown(reward_obj, "env.reward", {"alpha", "beta"})
    alpha = v.get_num(reward_obj, "env.reward", "alpha", 1.0, lo_strict=0)
    beta = v.get_num(reward_obj, "env.reward", "beta", 0.0, lo=0)

    slo_obj = env_obj.get("slo")
    slo: SloSpec | None = None
    if slo_obj is not None:
        if not isinstance(slo_obj, dict):
            v.err("env.slo", "expected an object or null")
        else:
            v.reject_unknown(slo_obj, "env.slo", {"kind", "threshold"})
            kind = v.get_str(
                slo_obj, "env.slo", "kind", "max_latency_ms",
                choices={"max_latency_ms", "min_throughput_tps"},
            )
            threshold = v.get_num(slo_obj, "env.slo", "threshold", 1.0, lo_strict=0)
            if not v.violations:
                slo = SloSpec(kind=kind, threshold=threshold)

    learner_obj = doc.get("learner", {})
    if not isinstance(learner_obj, dict):
        v.err("learner", "expected an object")
        learner_obj = {}
    v.reject_unknown(
        learner_obj, "learner",
        {"gamma", "epsilon", "epsilon_min", "epsilon_decay", "learning_rate", "max_episodes",
         "replay_capacity", "batch_size", "hidden_layers", "target_sync_interval",
         "pretrain_epochs", "q_init"},
    )
    gamma = v.get_num(learner_obj, "learner", "gamma", 0.95, lo=0)
    if isinstance(gamma, float) and gamma >= 1:
        v.err("learner.gamma", f"must be < 1, got {gamma}")
    epsilon = v.get_num(learner_obj, "learner", "epsilon", 1.0, lo_strict=0, hi=1)
    epsilon_min = v.get_num(learner_obj, "learner", "epsilon_min", 0.01, lo_strict=0, hi=1)
    if epsilon_min > epsilon:
        v.err("learner.epsilon_min", f"must be <= epsilon, got {epsilon_min} > {epsilon}")
    epsilon_decay = v.get_num(learner_obj, "learner", "epsilon_decay", 0.995, lo_strict=0)
    if isinstance(epsilon_decay, float) and epsilon_decay >= 1:
        v.err("learner.epsilon_decay", f"must be < 1, got {epsilon_decay}")
    learning_rate = v.get_num(learner_obj, "learner", "learning_rate", 0.001, lo=0)
    max_episodes = v.get_int(learner_obj, "learner", "max_episodes", 500, lo=1)
    replay_capacity = v.get_int(learner_obj, "learner", "replay_capacity", 10_000, lo=1)
    batch_size = v.get_int(learner_obj, "learner", "batch_size", 32, lo=1)
    if batch_size > replay_capacity:
        v.err("learner.batch_size", "cannot exceed replay_capacity")
    hidden = learner_obj.get("hidden_layers", [64, 64])
    if (
        not isinstance(hidden, list)
        or not hidden
        or any(isinstance(w, bool) or not isinstance(w, int) or w < 1 for w in hidden)
    ):
        v.err("learner.hidden_layers", f"expected a nonempty list of widths >= 1, got {hidden!r}")
        hidden = [64, 64]
    target_sync = v.get_int(learner_obj, "learner", "target_sync_interval", 200, lo=1)
    pretrain_epochs = v.get_int(learner_obj, "learner", "pretrain_epochs", 10, lo=0)
    q_init = v.get_num(learner_obj, "learner", "q_init", 0.0)

    agents_obj = doc.get("agents")
    agents: MadrlSettings | None = None
    if agents_obj is not None:
        if not isinstance(agents_obj, dict):
            v.err("agents", "expected an object or null")
        else:
            v.reject_unknown(agents_obj, "agents", {"roster", "delays", "slo_penalty", "max_vms"})
            roster_raw = agents_obj.get("roster", [])
            roles: list[AgentRole] = []
            known = {r.value for r in AgentRole}
            if not isinstance(roster_raw, list) or not roster_raw:
                v.err("agents.roster", "expected a nonempty list of role names")
            else:
                for i, name in enumerate(roster_raw):
                    if not isinstance(name, str) or name not in known:
                        v.err(f"agents.roster[{i}]", f"unknown role {name!r}")
                    else:
                        roles.append(AgentRole(name))
                if len(set(roles)) != len(roles):
                    v.err("agents.roster", "duplicate roles")
            delays = dict(DEFAULT_DELAYS_MS)
            delays_obj = agents_obj.get("delays", {})
            if not isinstance(delays_obj, dict):
                v.err("agents.delays", "expected an object")
            else:
                v.reject_unknown(delays_obj, "agents.delays", set(DEFAULT_DELAYS_MS))
                for key in DEFAULT_DELAYS_MS:
                    delays[key] = v.get_num(delays_obj, "agents.delays", key, delays[key], lo=0)
            slo_penalty = v.get_num(agents_obj, "agents", "slo_penalty", 1e-6, lo=0)
            max_vms = v.get_int(agents_obj, "agents", "max_vms", 6, lo=1)
            if max_vms < workers:
                v.err("agents.max_vms", f"must be >= sim.cluster.workers ({workers})")
            if not v.violations:
                agents = MadrlSettings(
                    roster=tuple(roles), delays=delays, slo_penalty=slo_penalty, max_vms=max_vms
                )

    train_obj = doc.get("train", {})
    if not isinstance(train_obj, dict):
        v.err("train", "expected an object")
        train_obj = {}
    v.reject_unknown(train_obj, "train", {"checkpoint_interval", "pretrain_trace"})
    checkpoint_interval = v.get_int(train_obj, "train", "checkpoint_interval", 10, lo=1)
    pretrain_trace = train_obj.get("pretrain_trace")
    if pretrain_trace is not None and not isinstance(pretrain_trace, str):
        v.err("train.pretrain_trace", f"expected a path string or null, got {pretrain_trace!r}")
        pretrain_trace = None

    eval_obj = doc.get("eval", {})
    if not isinstance(eval_obj, dict):
        v.err("eval", "expected an object")
        eval_obj = {}
    v.reject_unknown(eval_obj, "eval", {"batches", "fps_values", "episodes"})
    eval_batches = v.get_int(eval_obj, "eval", "batches", 200, lo=1)
    eval_episodes = v.get_int(eval_obj, "eval", "episodes", 10, lo=1)
    fps_values = eval_obj.get("fps_values", list(DEFAULT_FPS_VALUES))
    if (
        not isinstance(fps_values, list)
        or not fps_values
        or any(
            isinstance(f, bool)
            or not isinstance(f, int)
            or not simcore.FPS_MIN <= f <= simcore.FPS_MAX
            for f in fps_values
        )
    ):
        v.err(
            "eval.fps_values",
            f"expected a nonempty list of integers in "
            f"[{simcore.FPS_MIN},{simcore.FPS_MAX}], got {fps_values!r}",
        )
        fps_values = list(DEFAULT_FPS_VALUES)

    if v.violations:
        raise ConfigValidationError(v.violations)

    params = CostModelParams(
        k0=k0, k1=k1, k2=k2, phys_cores=phys_cores, noise_sigma=noise_sigma,
        noise_enabled=noise_enabled, frame_mb=frame_mb,
    )
    cluster = ClusterSpec.default(
        workers=workers, vm=VmSpec(vcpus=vcpus, ram_mb=ram_mb, hourly_cost=hourly_cost)
    )
    hyper = Hyperparams(
        gamma=gamma, epsilon=epsilon, epsilon_min=epsilon_min, epsilon_decay=epsilon_decay,
        learning_rate=learning_rate, max_episodes=max_episodes,
        replay_capacity=replay_capacity, batch_size=batch_size,
        hidden_layers=tuple(hidden), target_sync_interval=target_sync,
        pretrain_epochs=pretrain_epochs, q_init=q_init,
    )

    config = RunConfig(
        seed=seed,
        out_dir=out_dir,
        params=params,
        cluster=cluster,
        workload=WorkloadModel(fps=fps, partitions=partitions, frames_per_partition=frames),
        codec_mode=codec_mode,
        horizon=horizon,
        initial_config=ExecutorConfig(cores=init_cores, memory_mb=init_mem, instances=init_inst),
        reward=RewardSpec(alpha=alpha, beta=beta),
        slo=slo,
        hyper=hyper,
        agents=agents,
        checkpoint_interval=checkpoint_interval,
        pretrain_trace=pretrain_trace,
        eval_batches=eval_batches,
        eval_fps_values=tuple(fps_values),
        eval_episodes=eval_episodes,
        raw=_resolved_raw(doc),
    )
    return config


def _resolved_raw(doc: dict[str, Any]) -> dict[str, Any]:
    """Canonical JSON-safe copy of the input document for hashing."""
    return json.loads(json.dumps(doc, sort_keys=True))
