"""Training loops (single-agent DQN and the multi-agent coordinator) plus the
run-directory artifacts: events.jsonl, rewards.csv, timing.json, checkpoints.

All randomness flows from RunConfig.seed through named SeedSequence children;
wall-clock timers never enter the deterministic artifacts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dqn import (
    Hyperparams,
    QNetwork,
    ReplayBuffer,
    decay_epsilon,
    pretrain_from_trace,
    save_checkpoint,
    select_action,
    train_step,
)
from .dqn.checkpoint import load_checkpoint_full
from .env import OBSERVATION_DIM, ActionCodec, Environment, Transition
from .errors import NoDataError
from .madrl import (
    ActionSet,
    AgentSpec,
    Coordinator,
    default_partitions,
    default_world,
    DEFAULT_TUNER_GRIDS,
)
from .telemetry import EventLog, read_log

REWARDS_HEADER = ("step", "reward", "running_avg_1000", "episode", "episodic_mean")
RUNNING_WINDOW = 1000


@dataclass
class TrainResult:
    run_dir: Path
    rewards: np.ndarray
    episodes: int
    steps: int
    checkpoint_path: Path
    events_path: Path
    agent_wall_s: float
    env_wall_s: float


def running_average(rewards: np.ndarray, window: int = RUNNING_WINDOW) -> np.ndarray:
    """Trailing mean over the last min(window, n) values at each step."""
    if len(rewards) == 0:
        return np.empty(0)
    csum = np.concatenate([[0.0], np.cumsum(rewards)])
    n = len(rewards)
    idx = np.arange(1, n + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def write_rewards_csv(
    path: Path, rewards: list[float], episodes: list[int]
) -> None:
    """Columns: per-step reward, trailing running average, episode id, and the
    episode's mean reward (repeated on each of its rows)."""
    arr = np.asarray(rewards, dtype=np.float64)
    run_avg = running_average(arr)
    ep_arr = np.asarray(episodes)
    ep_mean: dict[int, float] = {}
    for ep in np.unique(ep_arr):
        ep_mean[int(ep)] = float(arr[ep_arr == ep].mean())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REWARDS_HEADER) + "\n")
        for i in range(len(arr)):
            fh.write(
                f"{i + 1},{arr[i]!r},{run_avg[i]!r},{episodes[i]},{ep_mean[episodes[i]]!r}\n"
            )


def read_rewards_csv(path: Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if len(lines) < 2:
        raise NoDataError(f"no data rows in {path}")
    header = lines[0].split(",")
    cols: dict[str, list[float]] = {name: [] for name in header}
    for line in lines[1:]:
        for name, val in zip(header, line.split(",")):
            cols[name].append(float(val))
    return {name: np.asarray(vals) for name, vals in cols.items()}


class _Timers:
    """Per-episode wall-clock accounting, bucketed by the episode's frame rate."""

    def __init__(self):
        self.rows: list[dict] = []
        self._agent = 0.0
        self._env = 0.0

    def start_episode(self) -> None:
        self._agent = 0.0
        self._env = 0.0

    def finish_episode(self, episode: int, fps: int) -> None:
        self.rows.append(
            {"episode": episode, "fps": fps, "agent_s": self._agent, "env_s": self._env}
        )

    def agent(self, dt: float) -> None:
        self._agent += dt

    def env(self, dt: float) -> None:
        self._env += dt

    @property
    def agent_total(self) -> float:
        return sum(r["agent_s"] for r in self.rows) + self._agent

    @property
    def env_total(self) -> float:
        return sum(r["env_s"] for r in self.rows) + self._env

    def dump(self, path: Path) -> None:
        doc = {
            "episodes": self.rows,
            "totals": {"agent_s": self.agent_total, "env_s": self.env_total},
        }
        path.write_text(json.dumps(doc, indent=1), encoding="utf-8")


def _spawn_rngs(seed: int, n_agents: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    children = np.random.SeedSequence(seed).spawn(1 + n_agents)
    env_rng = np.random.default_rng(children[0])
    agent_rngs = [np.random.default_rng(c) for c in children[1:]]
    return env_rng, agent_rngs


def train(config: RunConfig, resume: bool = False) -> TrainResult:
    if config.agents is not None:
        return _train_madrl(config)
    return _train_single(config, resume=resume)


def _train_single(config: RunConfig, resume: bool = False) -> TrainResult:
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    events_path = run_dir / "events.jsonl"
    checkpoint_path = run_dir / "checkpoint.json"

    h = config.hyper
    env_rng, (agent_rng,) = _spawn_rngs(config.seed, 1)
    codec = ActionCodec(mode=config.codec_mode)
    log = EventLog(events_path, run_config_hash=config.config_hash())
    env = Environment(
        config.params,
        codec,
        config.reward,
        env_rng,
        horizon=config.horizon,
        workload_model=config.workload,
        initial_config=config.initial_config,
        slo=config.slo,
        event_sink=log.append,
    )
    net = QNetwork.create(
        OBSERVATION_DIM, codec.cardinality, h.hidden_layers, agent_rng, q_init=h.q_init
    )
    target = net.copy()
    replay = ReplayBuffer(h.replay_capacity)
    epsilon = h.epsilon
    start_episode = 1

    if resume and checkpoint_path.exists():
        net, h_saved, state = load_checkpoint_full(checkpoint_path)
        target = net.copy()
        if state:
            epsilon = state.get("epsilon", epsilon)
            start_episode = state.get("episode", 0) + 1
            if "env_rng" in state:
                env_rng.bit_generator.state = state["env_rng"]
            if "agent_rng" in state:
                agent_rng.bit_generator.state = state["agent_rng"]

    if config.pretrain_trace:
        trace = read_log(config.pretrain_trace).records
        pretrain_from_trace(net, trace, h, replay=replay, rng=agent_rng)
        target = net.copy()

    timers = _Timers()
    rewards: list[float] = []
    episode_ids: list[int] = []
    last_loss: float | None = None
    train_count = 0

    def save(episode: int) -> None:
        save_checkpoint(
            net, h, checkpoint_path,
            rng_state={
                "episode": episode,
                "epsilon": epsilon,
                "env_rng": env_rng.bit_generator.state,
                "agent_rng": agent_rng.bit_generator.state,
            },
        )

    episode = start_episode - 1
    try:
        for episode in range(start_episode, h.max_episodes + 1):
            timers.start_episode()
            t0 = time.perf_counter()
            obs = env.reset()
            timers.env(time.perf_counter() - t0)
            done = False
            while not done:
                env.set_context(epsilon=epsilon, loss=last_loss)
                t0 = time.perf_counter()
                action = select_action(net, obs, epsilon, agent_rng)
                timers.agent(time.perf_counter() - t0)

                t0 = time.perf_counter()
                next_obs, reward, done = env.step(action)
                timers.env(time.perf_counter() - t0)

                replay.push(Transition(obs, action, reward, next_obs, done))
                if len(replay) >= h.batch_size:
                    t0 = time.perf_counter()
                    batch = replay.sample(h.batch_size, agent_rng)
                    last_loss = train_step(net, target, batch, h)
                    train_count += 1
                    if train_count % h.target_sync_interval == 0:
                        target = net.copy()
                    timers.agent(time.perf_counter() - t0)
                obs = next_obs
                rewards.append(reward)
                episode_ids.append(episode)
            assert env.workload is not None
            timers.finish_episode(episode, env.workload.fps)
            epsilon = decay_epsilon(h, epsilon)
            if episode % config.checkpoint_interval == 0:
                save(episode)
    finally:
        save(episode)
        if rewards:
            write_rewards_csv(run_dir / "rewards.csv", rewards, episode_ids)
        timers.dump(run_dir / "timing.json")

    return TrainResult(
        run_dir=run_dir,
        rewards=np.asarray(rewards),
        episodes=episode,
        steps=len(rewards),
        checkpoint_path=checkpoint_path,
        events_path=events_path,
        agent_wall_s=timers.agent_total,
        env_wall_s=timers.env_total,
    )


def build_agents(
    config: RunConfig, env_rng: np.random.Generator, rngs: list[np.random.Generator]
) -> tuple[list[AgentSpec], Coordinator]:
    """Construct the coordinator and one learner per rostered role."""
    assert config.agents is not None
    settings = config.agents

    def world_factory():
        return default_world(
            cluster=config.cluster,
            max_vms=settings.max_vms,
            initial_config=config.initial_config,
        )

    coordinator = Coordinator(
        config.params,
        config.reward,
        seed=env_rng,
        horizon=config.horizon,
        workload_model=config.workload,
        slo=config.slo,
        slo_penalty=settings.slo_penalty,
        delays=settings.delays,
        world_factory=world_factory,
    )
    template = world_factory()
    partitions = default_partitions(
        n_components=len(template.topology.components), n_tuner=len(DEFAULT_TUNER_GRIDS)
    )
    agents = []
    for role, rng in zip(settings.roster, rngs):
        action_set = ActionSet(role, template)
        partition = partitions[role]
        net = QNetwork.create(
            len(partition), action_set.cardinality, config.hyper.hidden_layers, rng,
            q_init=config.hyper.q_init,
        )
        agents.append(
            AgentSpec(role=role, state_partition=partition, action_set=action_set, net=net)
        )
    return agents, coordinator


def _train_madrl(config: RunConfig) -> TrainResult:
    assert config.agents is not None
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    events_path = run_dir / "events.jsonl"

    h = config.hyper
    roster = config.agents.roster
    env_rng, agent_rngs = _spawn_rngs(config.seed, len(roster))
    agents, coordinator = build_agents(config, env_rng, agent_rngs)
    log = EventLog(events_path, run_config_hash=config.config_hash())
    coordinator.event_sink = log.append

    targets = {a.role: a.net.copy() for a in agents}
    replays = {a.role: ReplayBuffer(h.replay_capacity) for a in agents}
    train_counts = {a.role: 0 for a in agents}
    losses: dict = {a.role: None for a in agents}
    epsilon = h.epsilon

    timers = _Timers()
    rewards: list[float] = []
    episode_ids: list[int] = []

    episode = 0
    try:
        for episode in range(1, h.max_episodes + 1):
            timers.start_episode()
            t0 = time.perf_counter()
            coordinator.reset()
            timers.env(time.perf_counter() - t0)
            done = False
            while not done:
                loss_vals = [v for v in losses.values() if v is not None]
                coordinator.set_context(
                    epsilon=epsilon,
                    loss=float(np.mean(loss_vals)) if loss_vals else None,
                )
                choosers = []
                for agent, rng in zip(agents, agent_rngs):
                    choosers.append(
                        lambda sub, net=agent.net, rng=rng: select_action(
                            net, sub, epsilon, rng
                        )
                    )
                t0 = time.perf_counter()
                reward, transitions, _ = coordinator.coordinate_step(agents, choosers)
                timers.env(time.perf_counter() - t0)
                done = transitions[roster[0]].done

                t0 = time.perf_counter()
                for agent, rng in zip(agents, agent_rngs):
                    tr = transitions[agent.role]
                    replays[agent.role].push(tr)
                    if len(replays[agent.role]) >= h.batch_size:
                        batch = replays[agent.role].sample(h.batch_size, rng)
                        losses[agent.role] = train_step(
                            agent.net, targets[agent.role], batch, h
                        )
                        train_counts[agent.role] += 1
                        if train_counts[agent.role] % h.target_sync_interval == 0:
                            targets[agent.role] = agent.net.copy()
                timers.agent(time.perf_counter() - t0)
                rewards.append(reward)
                episode_ids.append(episode)
            assert coordinator.world.workload is not None
            timers.finish_episode(episode, coordinator.world.workload.fps)
            epsilon = decay_epsilon(h, epsilon)
    finally:
        for agent in agents:
            save_checkpoint(
                agent.net, h, run_dir / f"checkpoint_{agent.role.value}.json"
            )
        if rewards:
            write_rewards_csv(run_dir / "rewards.csv", rewards, episode_ids)
        timers.dump(run_dir / "timing.json")

    return TrainResult(
        run_dir=run_dir,
        rewards=np.asarray(rewards),
        episodes=episode,
        steps=len(rewards),
        checkpoint_path=run_dir / f"checkpoint_{roster[0].value}.json",
        events_path=events_path,
        agent_wall_s=timers.agent_total,
        env_wall_s=timers.env_total,
    )
