"""Multi-agent decomposition: five specialized agent roles act round-robin on a
shared simulated world and learn from one global reward.

Each enactment carries a role-specific reconfiguration delay that is charged
to the next batch's effective processing time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import simcore
from .env import (
    ActionCodec,
    RewardSpec,
    SloSpec,
    Transition,
    WorkloadModel,
    compute_reward,
    observation_from_scalars,
    slo_satisfied,
)
from .errors import LifecycleError, StructuralError
from .simcore import (
    ClusterSpec,
    Component,
    CostModelParams,
    ExecutorConfig,
    Placement,
    SimMetrics,
    Topology,
    VmSpec,
    WorkloadSpec,
    cross_vm_fraction,
    scale_cluster,
)
from .telemetry import EventLogRecord


class AgentRole(enum.Enum):
    CLUSTER_AUTOSCALER = "cluster_autoscaler"
    PARALLELISM_AUTOSCALER = "parallelism_autoscaler"
    SCHEDULER = "scheduler"
    RESOURCE_ALLOCATOR = "resource_allocator"
    SYSTEM_PARAMETER_TUNER = "system_parameter_tuner"


# Reconfiguration delay per action kind, simulated milliseconds. Ordering
# encodes relative disruption: VM churn >> redeploys >> in-place tweaks.
DEFAULT_DELAYS_MS = {
    "vm_change": 30_000.0,
    "parallelism_change": 5_000.0,
    "replica_move": 2_000.0,
    "config_delta": 1_000.0,
    "parameter_change": 500.0,
}

DEFAULT_TUNER_GRIDS: dict[str, tuple[int, ...]] = {
    "packet_size_kb": (4, 8, 16, 32),
    "queue_capacity": (500, 750, 1000, 1500, 2000),
    "socket_buffer_kb": (32, 64, 128, 256),
}
DEFAULT_TUNER_VALUES = {"packet_size_kb": 16, "queue_capacity": 1000, "socket_buffer_kb": 128}

_ALLOCATOR_CODEC = ActionCodec(mode="delta")

PARALLELISM_NORM = 8.0  # display normalization cap for per-component parallelism


def default_topology() -> Topology:
    """Three-stage video pipeline sized so the default parallelism handles
    low frame rates headroom-free and saturates at high ones."""
    return Topology(
        components=[
            Component(id="ingest", parallelism=2, service_rate=120.0),
            Component(id="grayscale", parallelism=3, service_rate=80.0),
            Component(id="sink", parallelism=2, service_rate=240.0),
        ],
        edges=[("ingest", "grayscale"), ("grayscale", "sink")],
    )


def default_placement(topology: Topology, cluster: ClusterSpec) -> Placement:
    """Round-robin replicas over VMs, filling in component order."""
    assignments: dict[str, tuple[int, ...]] = {}
    load = [0] * len(cluster.vms)
    for comp in topology.components:
        slots = []
        for _ in range(comp.parallelism):
            vm = min(range(len(load)), key=lambda i: (load[i], i))
            load[vm] += 1
            slots.append(vm)
        assignments[comp.id] = tuple(slots)
    return Placement(assignments=assignments)


@dataclass
class World:
    """Mutable simulated deployment the enactors operate on."""

    cluster: ClusterSpec
    topology: Topology
    placement: Placement
    executor_config: ExecutorConfig
    tuner_values: dict[str, int]
    queues: dict[str, float] = field(default_factory=dict)
    workload: WorkloadSpec | None = None
    step_index: int = 0
    max_vms: int = 6
    vm_flavor: VmSpec = field(default_factory=VmSpec)

    def total_replicas(self) -> int:
        return sum(c.parallelism for c in self.topology.components)

    def vm_load(self) -> list[int]:
        load = [0] * len(self.cluster.vms)
        for vms in self.placement.assignments.values():
            for vm in vms:
                load[vm] += 1
        return load

    def cost_rate_norm(self) -> float:
        """Normalized lease-cost rate blending cluster size, replica count,
        and executor footprint, each as a fraction of its maximum."""
        max_slots = self.max_vms * self.vm_flavor.vcpus
        vm_term = len(self.cluster.vms) / self.max_vms
        replica_term = min(1.0, self.total_replicas() / max_slots)
        exec_term = simcore.normalized_cost_rate(self.executor_config)
        return (vm_term + replica_term + exec_term) / 3.0

    def colocation_fraction(self) -> float:
        edges = self.topology.edges
        if not edges:
            return 1.0
        crossing = sum(cross_vm_fraction(self.placement, u, v) for u, v in edges)
        return 1.0 - crossing / len(edges)


def default_world(
    cluster: ClusterSpec | None = None,
    topology: Topology | None = None,
    max_vms: int = 6,
    initial_config: ExecutorConfig | None = None,
) -> World:
    cluster = cluster or ClusterSpec.default()
    topology = topology or default_topology()
    return World(
        cluster=cluster,
        topology=topology,
        placement=default_placement(topology, cluster),
        executor_config=initial_config
        or ExecutorConfig(cores=2, memory_mb=700, instances=6),
        tuner_values=dict(DEFAULT_TUNER_VALUES),
        max_vms=max_vms,
        vm_flavor=cluster.vms[0],
    )


@dataclass(frozen=True)
class EnactmentResult:
    applied: bool
    reconfiguration_delay_ms: float
    cost_delta: float = 0.0

    def __post_init__(self):
        if self.reconfiguration_delay_ms < 0:
            raise ValueError("reconfiguration delay must be >= 0")


class ActionSet:
    """Role-specific discrete action space of fixed cardinality."""

    def __init__(self, role: AgentRole, world: World):
        self.role = role
        n_comp = len(world.topology.components)
        if role is AgentRole.CLUSTER_AUTOSCALER:
            self.cardinality = 3
        elif role is AgentRole.PARALLELISM_AUTOSCALER:
            self.cardinality = 3**n_comp
        elif role is AgentRole.SCHEDULER:
            self.cardinality = 1 + n_comp * world.max_vms
        elif role is AgentRole.RESOURCE_ALLOCATOR:
            self._codec = _ALLOCATOR_CODEC
            self.cardinality = self._codec.cardinality
        else:
            self.cardinality = 3 ** len(DEFAULT_TUNER_GRIDS)

    @property
    def codec(self) -> ActionCodec:
        return self._codec


def _base3_deltas(action: int, n: int) -> tuple[int, ...]:
    digits = []
    rest = action
    for _ in range(n):
        digits.append(rest % 3 - 1)
        rest //= 3
    return tuple(reversed(digits))


def enact(
    action: int,
    role: AgentRole,
    world: World,
    delays: dict[str, float] | None = None,
) -> EnactmentResult:
    """Apply one agent action to the world; infeasible actions become no-ops
    with applied=False and mutate nothing."""
    delays = delays if delays is not None else DEFAULT_DELAYS_MS

    if role is AgentRole.CLUSTER_AUTOSCALER:
        delta = action - 1
        if delta == 0:
            return EnactmentResult(applied=True, reconfiguration_delay_ms=0.0)
        if delta > 0 and len(world.cluster.vms) >= world.max_vms:
            return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
        try:
            new_cluster, _ = scale_cluster(
                world.cluster, delta, world.vm_flavor, placement=world.placement
            )
        except simcore.CapacityError:
            return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
        world.cluster = new_cluster
        return EnactmentResult(
            applied=True,
            reconfiguration_delay_ms=delays["vm_change"],
            cost_delta=delta * world.vm_flavor.hourly_cost,
        )

    if role is AgentRole.PARALLELISM_AUTOSCALER:
        comps = world.topology.components
        deltas = _base3_deltas(action, len(comps))
        if all(d == 0 for d in deltas):
            return EnactmentResult(applied=True, reconfiguration_delay_ms=0.0)
        new_assignments = {k: list(v) for k, v in world.placement.assignments.items()}
        load = world.vm_load()
        topology = world.topology
        for comp, d in zip(comps, deltas):
            if d == 0:
                continue
            if d > 0:
                spare = [
                    i for i in range(len(world.cluster.vms))
                    if load[i] < world.cluster.vms[i].vcpus
                ]
                if not spare:
                    return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
                vm = min(spare, key=lambda i: (load[i], i))
                load[vm] += 1
                new_assignments[comp.id].append(vm)
                topology = topology.with_parallelism(comp.id, comp.parallelism + 1)
            else:
                if comp.parallelism <= 1:
                    return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
                slots = new_assignments[comp.id]
                victim = max(range(len(slots)), key=lambda j: (load[slots[j]], slots[j]))
                load[slots[victim]] -= 1
                slots.pop(victim)
                topology = topology.with_parallelism(comp.id, comp.parallelism - 1)
        world.topology = topology
        world.placement = Placement(
            assignments={k: tuple(v) for k, v in new_assignments.items()}
        )
        return EnactmentResult(
            applied=True, reconfiguration_delay_ms=delays["parallelism_change"]
        )

    if role is AgentRole.SCHEDULER:
        if action == 0:
            return EnactmentResult(applied=True, reconfiguration_delay_ms=0.0)
        comps = world.topology.components
        comp_idx, target_vm = divmod(action - 1, world.max_vms)
        comp = comps[comp_idx]
        if target_vm >= len(world.cluster.vms):
            return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
        load = world.vm_load()
        if load[target_vm] >= world.cluster.vms[target_vm].vcpus:
            return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
        slots = list(world.placement.assignments[comp.id])
        movable = [j for j in range(len(slots)) if slots[j] != target_vm]
        if not movable:
            return EnactmentResult(applied=False, reconfiguration_delay_ms=0.0)
        victim = max(movable, key=lambda j: (load[slots[j]], slots[j]))
        slots[victim] = target_vm
        assignments = dict(world.placement.assignments)
        assignments[comp.id] = tuple(slots)
        world.placement = Placement(assignments=assignments)
        return EnactmentResult(applied=True, reconfiguration_delay_ms=delays["replica_move"])

    if role is AgentRole.RESOURCE_ALLOCATOR:
        new_config = _ALLOCATOR_CODEC.decode(action, world.executor_config)
        changed = new_config != world.executor_config
        world.executor_config = new_config
        return EnactmentResult(
            applied=True,
            reconfiguration_delay_ms=delays["config_delta"] if changed else 0.0,
        )

    # SYSTEM_PARAMETER_TUNER
    names = sorted(DEFAULT_TUNER_GRIDS)
    deltas = _base3_deltas(action, len(names))
    changed = False
    new_values = dict(world.tuner_values)
    for name, d in zip(names, deltas):
        grid = DEFAULT_TUNER_GRIDS[name]
        idx = grid.index(new_values[name]) + d
        idx = min(len(grid) - 1, max(0, idx))
        if grid[idx] != new_values[name]:
            changed = True
        new_values[name] = grid[idx]
    world.tuner_values = new_values
    return EnactmentResult(
        applied=True,
        reconfiguration_delay_ms=delays["parameter_change"] if changed else 0.0,
    )


@dataclass
class AgentSpec:
    """One agent: its role, observation slice, action space, and learner."""

    role: AgentRole
    state_partition: tuple[int, ...]
    action_set: ActionSet
    net: object = None  # QNetwork; untyped to keep this module learner-agnostic

    def __post_init__(self):
        if len(self.state_partition) == 0:
            raise StructuralError(f"{self.role.value}: state partition must be nonempty")
        if self.action_set.cardinality < 1:
            raise StructuralError(f"{self.role.value}: action set must be nonempty")


def partition_state(global_obs: np.ndarray, spec: AgentSpec) -> np.ndarray:
    """Order-preserving projection of the global observation onto the agent's slice."""
    for idx in spec.state_partition:
        if not 0 <= idx < len(global_obs):
            raise StructuralError(
                f"partition index {idx} out of bounds for observation of {len(global_obs)}"
            )
    return global_obs[list(spec.state_partition)]


def default_partitions(n_components: int, n_tuner: int) -> dict[AgentRole, tuple[int, ...]]:
    """Index slices into the extended global observation (base 9 + extras)."""
    pars = tuple(range(10, 10 + n_components))
    queue_idx = 10 + n_components
    coloc_idx = queue_idx + 1
    tuner = tuple(range(coloc_idx + 1, coloc_idx + 1 + n_tuner))
    return {
        AgentRole.CLUSTER_AUTOSCALER: (0, 4, 5, 8, 9),
        AgentRole.PARALLELISM_AUTOSCALER: (0, 4, 7) + pars + (queue_idx,),
        AgentRole.SCHEDULER: (0, 4, 9) + pars + (coloc_idx,),
        AgentRole.RESOURCE_ALLOCATOR: tuple(range(9)),
        AgentRole.SYSTEM_PARAMETER_TUNER: (0, 4, 7, queue_idx) + tuner,
    }


def shared_reward(
    metrics: SimMetrics,
    spec: RewardSpec,
    slo: SloSpec | None,
    penalty: float = 1e-6,
) -> float:
    """Global reward: inverse effective time, minus weighted cost, minus a flat
    penalty when the SLO is violated."""
    r = compute_reward(metrics.processing_time_ms, metrics.infra_cost_rate, spec)
    if slo is not None and not slo_satisfied(metrics, slo):
        r -= penalty
    return r


def scheduler_heuristic_action(world: World) -> int:
    """Co-locate communicating replicas: move one replica of the downstream
    component of the worst edge onto the VM hosting most upstream replicas."""
    best_edge = None
    worst = 0.0
    for u, v in world.topology.edges:
        frac = cross_vm_fraction(world.placement, u, v)
        if frac > worst:
            worst = frac
            best_edge = (u, v)
    if best_edge is None:
        return 0
    u, v = best_edge
    up_vms = world.placement.vms_of(u)
    counts: dict[int, int] = {}
    for vm in up_vms:
        counts[vm] = counts.get(vm, 0) + 1
    target = min(counts, key=lambda vm: (-counts[vm], vm))
    load = world.vm_load()
    if load[target] >= world.cluster.vms[target].vcpus:
        return 0
    comp_idx = [c.id for c in world.topology.components].index(v)
    return 1 + comp_idx * world.max_vms + target


def tuner_heuristic_action(world: World) -> int:
    """Hold every parameter at its current grid point."""
    return _tuner_noop_action()


def _tuner_noop_action() -> int:
    n = len(DEFAULT_TUNER_GRIDS)
    action = 0
    for _ in range(n):
        action = action * 3 + 1
    return action


class Coordinator:
    """Round-robin multi-agent loop over one shared world.

    Per step window: each agent observes its slice of the refreshed global
    observation, acts, and its enactment lands before the next agent observes.
    The window then runs one simulated batch plus one topology step; every
    agent's transition carries the identical global reward. Reconfiguration
    delays raised during the window are charged to this batch's effective
    processing time.
    """

    def __init__(
        self,
        params: CostModelParams,
        reward_spec: RewardSpec,
        seed: int | np.random.Generator,
        *,
        horizon: int = 100,
        workload_model: WorkloadModel | None = None,
        slo: SloSpec | None = None,
        slo_penalty: float = 1e-6,
        delays: dict[str, float] | None = None,
        world_factory: Callable[[], World] = default_world,
        cross_vm_penalty_ms: float = 0.5,
        event_sink: Callable[[EventLogRecord], None] | None = None,
    ):
        self.params = params
        self.reward_spec = reward_spec
        self.horizon = horizon
        self.workload_model = workload_model or WorkloadModel()
        self.slo = slo
        self.slo_penalty = slo_penalty
        self.delays = delays if delays is not None else dict(DEFAULT_DELAYS_MS)
        self.world_factory = world_factory
        self.cross_vm_penalty_ms = cross_vm_penalty_ms
        self.event_sink = event_sink
        self._rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

        self.world = world_factory()
        self.episode = 0
        self.step_index = 0
        self.global_step = 0
        self.record_ts = 0
        self._done = True
        self._last_time_ms = 0.0
        self._last_batch: SimMetrics | None = None
        self._last_topo: SimMetrics | None = None
        self._context = {"epsilon": 0.0, "loss": None}
        self.roster_log: list[tuple[str, int, bool]] = []

    @property
    def global_dim(self) -> int:
        n_comp = len(self.world.topology.components)
        return 9 + 1 + n_comp + 1 + 1 + len(DEFAULT_TUNER_GRIDS)

    def set_context(self, epsilon: float | None = None, loss: float | None = None) -> None:
        if epsilon is not None:
            self._context["epsilon"] = epsilon
        self._context["loss"] = loss

    def _effective_params(self) -> CostModelParams:
        return replace(self.params, phys_cores=self.world.cluster.total_vcpus)

    def global_observation(self) -> np.ndarray:
        """Base env features followed by cluster size, per-component parallelism,
        queue pressure, co-location, and tuner positions, all in [0, 1]."""
        world = self.world
        assert world.workload is not None and self._last_batch is not None
        backpressure = self._last_topo.backpressure if self._last_topo else False
        base = observation_from_scalars(
            world.workload.fps,
            world.executor_config,
            self._last_time_ms,
            self._last_batch.cpu_util_pct,
            self._last_batch.mem_util_pct,
            backpressure,
        )
        threshold = float(world.tuner_values["queue_capacity"])
        total_queue = sum(world.queues.values())
        extras = [len(world.cluster.vms) / world.max_vms]
        extras += [
            min(1.0, c.parallelism / PARALLELISM_NORM) for c in world.topology.components
        ]
        extras.append(min(1.0, total_queue / threshold))
        extras.append(world.colocation_fraction())
        for name in sorted(DEFAULT_TUNER_GRIDS):
            grid = DEFAULT_TUNER_GRIDS[name]
            extras.append(grid.index(world.tuner_values[name]) / (len(grid) - 1))
        return np.concatenate([base, np.array(extras, dtype=np.float64)])

    def reset(self) -> np.ndarray:
        """New episode: rebuild the world, resample the workload, probe once."""
        self.world = self.world_factory()
        self.episode += 1
        self.step_index = 0
        self._done = False
        self.world.workload = self.workload_model.sample(self._rng)
        seed = int(self._rng.integers(0, 2**63))
        self._last_batch = simcore.simulate_batch(
            self.world.executor_config, self.world.workload, self._effective_params(), seed
        )
        self._last_time_ms = self._last_batch.processing_time_ms
        self._last_topo = None
        self.world.queues = {}
        return self.global_observation()

    def coordinate_step(
        self,
        agents: list[AgentSpec],
        choosers: list[Callable[[np.ndarray], int]],
    ) -> tuple[float, dict[AgentRole, Transition], SimMetrics]:
        """One step window: every agent acts in roster order, then the world
        advances and the shared reward is handed to every agent's transition."""
        if self._done:
            raise LifecycleError("coordinate_step called on a finished episode; call reset()")
        if len(agents) < 1:
            raise StructuralError("coordinate_step requires at least one agent")
        world = self.world
        assert world.workload is not None

        pending_delay = 0.0
        sub_states: list[np.ndarray] = []
        actions: list[int] = []
        applied_flags: list[bool] = []
        obs_g = self.global_observation()
        for agent, choose in zip(agents, choosers):
            sub = partition_state(obs_g, agent)
            action = choose(sub)
            result = enact(action, agent.role, world, self.delays)
            pending_delay += result.reconfiguration_delay_ms
            sub_states.append(sub)
            actions.append(action)
            applied_flags.append(result.applied)
            obs_g = self.global_observation()

        seed = int(self._rng.integers(0, 2**63))
        batch = simcore.simulate_batch(
            world.executor_config, world.workload, self._effective_params(), seed
        )
        arrival = float(world.workload.fps * world.workload.partitions)
        topo = simcore.step_topology(
            world.topology,
            world.placement,
            arrival,
            dt=1.0,
            cluster=world.cluster,
            queues=world.queues,
            queue_threshold=float(world.tuner_values["queue_capacity"]),
            cross_vm_penalty_ms=self.cross_vm_penalty_ms,
        )
        world.queues = dict(topo.queue_lengths)

        effective_time = batch.processing_time_ms + pending_delay
        merged = SimMetrics(
            processing_time_ms=effective_time,
            throughput_tps=topo.throughput_tps,
            latency_ms=effective_time + topo.latency_ms,
            queue_lengths=dict(topo.queue_lengths),
            backpressure=topo.backpressure,
            cpu_util_pct=batch.cpu_util_pct,
            mem_util_pct=batch.mem_util_pct,
            infra_cost_rate=world.cost_rate_norm(),
        )
        reward = shared_reward(merged, self.reward_spec, self.slo, self.slo_penalty)

        self.step_index += 1
        self.global_step += 1
        world.step_index = self.global_step
        self._done = self.step_index >= self.horizon
        self._last_batch = batch
        self._last_topo = topo
        self._last_time_ms = effective_time
        next_obs_g = self.global_observation()

        transitions: dict[AgentRole, Transition] = {}
        for agent, sub, action, applied in zip(agents, sub_states, actions, applied_flags):
            transitions[agent.role] = Transition(
                state=sub,
                action=action,
                reward=reward,
                next_state=partition_state(next_obs_g, agent),
                done=self._done,
            )
            self.roster_log.append((agent.role.value, action, applied))
            if self.event_sink is not None:
                self.record_ts += 1
                self.event_sink(
                    self._make_record(agent.role, action, applied, merged, reward)
                )
        return reward, transitions, merged

    def _make_record(
        self, role: AgentRole, action: int, applied: bool, metrics: SimMetrics, reward: float
    ) -> EventLogRecord:
        world = self.world
        assert world.workload is not None
        return EventLogRecord(
            ts=self.record_ts,
            episode=self.episode,
            step=self.step_index,
            fps=world.workload.fps,
            partitions=world.workload.partitions,
            frames_per_partition=world.workload.frames_per_partition,
            cores=world.executor_config.cores,
            memory_mb=world.executor_config.memory_mb,
            instances=world.executor_config.instances,
            processing_time_ms=metrics.processing_time_ms,
            reward=reward,
            epsilon=self._context["epsilon"],
            loss=self._context["loss"],
            cpu_util_pct=metrics.cpu_util_pct,
            mem_util_pct=metrics.mem_util_pct,
            contention=simcore.contention_factor(
                world.executor_config.cores,
                world.executor_config.instances,
                world.cluster.total_vcpus,
            ),
            action_index=action,
            applied=applied,
            agent_role=role.value,
        )


def replay_events(
    records: list[EventLogRecord],
    world: World,
    delays: dict[str, float] | None = None,
) -> World:
    """Re-apply the logged agent actions in order; reproduces the world state
    a coordinator reached, given the same initial world."""
    roles = {r.value: r for r in AgentRole}
    for rec in records:
        if rec.agent_role is None:
            continue
        enact(rec.action_index, roles[rec.agent_role], world, delays)
    return world
