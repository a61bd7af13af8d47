"""Deterministic, seedable model of a Spark-like serverless cluster.

Covers the batch cost surface the tuning agent optimizes, a queueing model of
an operator topology with backpressure, and the search/action-space
combinatorics used to size the tuning problem.
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundsError, CapacityError, StructuralError

# Tunable-knob bounds (closed intervals / discrete levels).
CORES_MIN, CORES_MAX = 1, 3
MEMORY_MIN, MEMORY_MAX, MEMORY_STEP = 500, 1000, 100
MEMORY_LEVELS = tuple(range(MEMORY_MIN, MEMORY_MAX + 1, MEMORY_STEP))
INSTANCES_MIN, INSTANCES_MAX = 5, 8

FPS_MIN, FPS_MAX = 10, 60
PARTITIONS_MIN, PARTITIONS_MAX = 5, 8
FRAMES_MIN, FRAMES_MAX = 10, 60

DEFAULT_VM_BOOT_MS = 30_000.0


@dataclass(frozen=True)
class VmSpec:
    """One worker VM flavor."""

    vcpus: int = 4
    ram_mb: int = 8192
    hourly_cost: float = 0.20

    def __post_init__(self):
        if self.vcpus < 1:
            raise BoundsError(f"vcpus must be >= 1, got {self.vcpus}")
        if self.ram_mb < 1:
            raise BoundsError(f"ram_mb must be >= 1, got {self.ram_mb}")
        if self.hourly_cost < 0:
            raise BoundsError(f"hourly_cost must be >= 0, got {self.hourly_cost}")


@dataclass(frozen=True)
class ClusterSpec:
    """Ordered list of worker VMs backing the engine."""

    vms: tuple[VmSpec, ...]

    def __post_init__(self):
        if len(self.vms) < 1:
            raise CapacityError("cluster must contain at least one VM")

    @property
    def total_vcpus(self) -> int:
        return sum(vm.vcpus for vm in self.vms)

    @property
    def hourly_cost(self) -> float:
        return sum(vm.hourly_cost for vm in self.vms)

    @classmethod
    def default(cls, workers: int = 3, vm: VmSpec | None = None) -> "ClusterSpec":
        vm = vm if vm is not None else VmSpec()
        return cls(vms=(vm,) * workers)


@dataclass(frozen=True)
class ExecutorConfig:
    """The three executor knobs the agent controls."""

    cores: int
    memory_mb: int
    instances: int

    def __post_init__(self):
        if not CORES_MIN <= self.cores <= CORES_MAX:
            raise BoundsError(f"cores must be in [{CORES_MIN},{CORES_MAX}], got {self.cores}")
        if self.memory_mb not in MEMORY_LEVELS:
            raise BoundsError(
                f"memory_mb must be one of {MEMORY_LEVELS}, got {self.memory_mb}"
            )
        if not INSTANCES_MIN <= self.instances <= INSTANCES_MAX:
            raise BoundsError(
                f"instances must be in [{INSTANCES_MIN},{INSTANCES_MAX}], got {self.instances}"
            )


@dataclass(frozen=True)
class WorkloadSpec:
    """Offered load: frame rate plus how frames are grouped into partitions."""

    fps: int
    partitions: int
    frames_per_partition: int

    def __post_init__(self):
        if not FPS_MIN <= self.fps <= FPS_MAX:
            raise BoundsError(f"fps must be in [{FPS_MIN},{FPS_MAX}], got {self.fps}")
        if not PARTITIONS_MIN <= self.partitions <= PARTITIONS_MAX:
            raise BoundsError(
                f"partitions must be in [{PARTITIONS_MIN},{PARTITIONS_MAX}], got {self.partitions}"
            )
        if not FRAMES_MIN <= self.frames_per_partition <= FRAMES_MAX:
            raise BoundsError(
                f"frames_per_partition must be in [{FRAMES_MIN},{FRAMES_MAX}], "
                f"got {self.frames_per_partition}"
            )


@dataclass(frozen=True)
class CostModelParams:
    """Calibration constants of the batch cost surface.

    k0: fixed overhead, ms. k1: work coefficient, ms per (fps unit / effective
    core). k2: per-instance coordination overhead, ms/instance. phys_cores:
    physical core budget before over-provisioning contention kicks in.
    frame_mb feeds the memory-utilization ratio only.
    """

    k0: float = 50.0
    k1: float = 96.0
    k2: float = 20.0
    phys_cores: int = 12
    noise_sigma: float = 0.05
    noise_enabled: bool = True
    frame_mb: float = 2.0

    def __post_init__(self):
        if self.k0 < 0 or self.k1 < 0 or self.k2 < 0:
            raise BoundsError("k0, k1, k2 must all be >= 0")
        if self.phys_cores < 1:
            raise BoundsError(f"phys_cores must be >= 1, got {self.phys_cores}")
        if self.noise_sigma < 0:
            raise BoundsError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.frame_mb <= 0:
            raise BoundsError(f"frame_mb must be > 0, got {self.frame_mb}")


@dataclass(frozen=True)
class Component:
    """One operator of a streaming topology."""

    id: str
    parallelism: int
    service_rate: float  # tuples/s per replica
    selectivity: float = 1.0  # output tuples per input tuple

    def __post_init__(self):
        if self.parallelism < 1:
            raise BoundsError(f"component {self.id}: parallelism must be >= 1")
        if self.service_rate <= 0:
            raise BoundsError(f"component {self.id}: service_rate must be > 0")
        if self.selectivity < 0:
            raise BoundsError(f"component {self.id}: selectivity must be >= 0")


@dataclass
class Topology:
    """DAG of components; edges are (upstream_id, downstream_id)."""

    components: list[Component]
    edges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate component ids in topology")
        known = set(ids)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise StructuralError(f"edge ({u},{v}) references unknown component")
        graph: dict[str, set[str]] = {i: set() for i in ids}
        for u, v in self.edges:
            graph[v].add(u)
        try:
            self._order = tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise StructuralError(f"topology contains a cycle: {exc.args[1]}") from exc

    def component(self, cid: str) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise StructuralError(f"unknown component {cid!r}")

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def predecessors(self, cid: str) -> list[str]:
        return [u for u, v in self.edges if v == cid]

    def successors(self, cid: str) -> list[str]:
        return [v for u, v in self.edges if u == cid]

    def sources(self) -> list[str]:
        return [c.id for c in self.components if not self.predecessors(c.id)]

    def sinks(self) -> list[str]:
        return [c.id for c in self.components if not self.successors(c.id)]

    def with_parallelism(self, cid: str, parallelism: int) -> "Topology":
        comps = [
            replace(c, parallelism=parallelism) if c.id == cid else c for c in self.components
        ]
        return Topology(components=comps, edges=list(self.edges))


@dataclass
class Placement:
    """Per-component replica-to-VM assignment: component id -> VM index per replica."""

    assignments: dict[str, tuple[int, ...]]

    def vms_of(self, cid: str) -> tuple[int, ...]:
        return self.assignments[cid]


@dataclass(frozen=True)
class SimMetrics:
    """One step's observable metrics."""

    processing_time_ms: float
    throughput_tps: float
    latency_ms: float
    queue_lengths: dict[str, float]
    backpressure: bool
    cpu_util_pct: float
    mem_util_pct: float
    infra_cost_rate: float


def mem_factor(memory_mb: float) -> float:
    """Linear effectiveness of executor memory, 0.5 at 500 MB up to 1.0 at 1000 MB."""
    if not MEMORY_MIN <= memory_mb <= MEMORY_MAX:
        raise BoundsError(f"memory_mb must be in [{MEMORY_MIN},{MEMORY_MAX}], got {memory_mb}")
    return 0.5 + 0.5 * (memory_mb - MEMORY_MIN) / (MEMORY_MAX - MEMORY_MIN)


def contention_factor(cores: int, instances: int, phys_cores: int) -> float:
    """Quadratic slowdown once requested cores exceed the physical budget."""
    return max(1.0, (instances * cores) / phys_cores) ** 2


def noise_factor(seed: int, sigma: float) -> float:
    """Seed-deterministic multiplicative lognormal(0, sigma) draw."""
    if sigma == 0.0:
        return 1.0
    rng = np.random.default_rng(seed)
    return float(np.exp(sigma * rng.standard_normal()))


def batch_time_ms(config: ExecutorConfig, fps: float, params: CostModelParams) -> float:
    """Noise-free batch processing time for a configuration at a given frame rate."""
    effective_cores = config.instances * config.cores * mem_factor(config.memory_mb)
    base = params.k0 + params.k1 * fps / effective_cores + params.k2 * config.instances
    return base * contention_factor(config.cores, config.instances, params.phys_cores)


def normalized_cost_rate(config: ExecutorConfig) -> float:
    """Executor resource footprint as a fraction of the maximal grid point."""
    return (config.cores * config.instances * config.memory_mb) / (
        CORES_MAX * INSTANCES_MAX * MEMORY_MAX
    )


def simulate_batch(
    config: ExecutorConfig,
    workload: WorkloadSpec,
    params: CostModelParams,
    seed: int,
) -> SimMetrics:
    """Run one batch of the video workload under the given executor configuration.

    Identical arguments (including seed) always produce identical metrics.
    """
    t_ms = batch_time_ms(config, workload.fps, params)
    if params.noise_enabled:
        t_ms *= noise_factor(seed, params.noise_sigma)

    frames = workload.partitions * workload.frames_per_partition
    throughput = frames * 1000.0 / t_ms if t_ms > 0 else 0.0

    alloc_cores = config.cores * config.instances
    cpu_work = params.k1 * workload.fps  # core-ms of work per batch
    cpu_util = 100.0 * min(1.0, cpu_work / (alloc_cores * t_ms)) if t_ms > 0 else 0.0

    mem_demand_mb = params.frame_mb * (frames + workload.fps)
    mem_util = 100.0 * min(1.0, mem_demand_mb / (config.instances * config.memory_mb))

    return SimMetrics(
        processing_time_ms=t_ms,
        throughput_tps=throughput,
        latency_ms=t_ms,
        queue_lengths={},
        backpressure=False,
        cpu_util_pct=cpu_util,
        mem_util_pct=mem_util,
        infra_cost_rate=normalized_cost_rate(config),
    )


def executor_grid() -> list[ExecutorConfig]:
    """All 72 executor configurations, lexicographic in (cores, memory_mb, instances)."""
    return [
        ExecutorConfig(cores=c, memory_mb=m, instances=i)
        for c in range(CORES_MIN, CORES_MAX + 1)
        for m in MEMORY_LEVELS
        for i in range(INSTANCES_MIN, INSTANCES_MAX + 1)
    ]


def brute_force_optimum(
    workload: WorkloadSpec, params: CostModelParams
) -> tuple[ExecutorConfig, float]:
    """Exhaustive argmin over the 72-point grid using the noise-free surface.

    Ties break lexicographically on (cores, memory_mb, instances), which is the
    enumeration order of the grid.
    """
    best_config: ExecutorConfig | None = None
    best_time = math.inf
    for config in executor_grid():
        t = batch_time_ms(config, workload.fps, params)
        if t < best_time:
            best_time = t
            best_config = config
    assert best_config is not None
    return best_config, best_time


def count_parallelism_configs(n_components: int, total_slots: int) -> int:
    """Number of ways to assign parallelism >= 1 to each component summing to total_slots."""
    if n_components < 1:
        raise BoundsError(f"n_components must be >= 1, got {n_components}")
    if n_components > total_slots:
        raise BoundsError(
            f"n_components ({n_components}) cannot exceed total_slots ({total_slots})"
        )
    return math.comb(total_slots - 1, n_components - 1)


def action_space_size(n_components: int) -> int:
    """Discrete joint actions when each component independently steps -1/0/+1."""
    if n_components < 0:
        raise BoundsError(f"n_components must be >= 0, got {n_components}")
    return 3**n_components


def validate_placement(
    topology: Topology, placement: Placement, cluster: ClusterSpec | None = None
) -> None:
    known = {c.id for c in topology.components}
    for cid in placement.assignments:
        if cid not in known:
            raise StructuralError(f"placement references unknown component {cid!r}")
    load: dict[int, int] = {}
    for comp in topology.components:
        if comp.id not in placement.assignments:
            raise StructuralError(f"placement missing component {comp.id!r}")
        vms = placement.assignments[comp.id]
        if len(vms) != comp.parallelism:
            raise StructuralError(
                f"placement for {comp.id!r} has {len(vms)} replicas, "
                f"parallelism is {comp.parallelism}"
            )
        for vm_idx in vms:
            if cluster is not None and not 0 <= vm_idx < len(cluster.vms):
                raise StructuralError(
                    f"placement for {comp.id!r} references unknown VM {vm_idx}"
                )
            load[vm_idx] = load.get(vm_idx, 0) + 1
    if cluster is not None:
        for vm_idx, n in load.items():
            if n > cluster.vms[vm_idx].vcpus:
                raise CapacityError(
                    f"VM {vm_idx} hosts {n} replicas but has {cluster.vms[vm_idx].vcpus} vcpus"
                )


def cross_vm_fraction(placement: Placement, upstream: str, downstream: str) -> float:
    """Fraction of (upstream, downstream) replica pairs living on different VMs."""
    up = placement.vms_of(upstream)
    down = placement.vms_of(downstream)
    pairs = len(up) * len(down)
    if pairs == 0:
        return 0.0
    crossing = sum(1 for a in up for b in down if a != b)
    return crossing / pairs


def step_topology(
    topology: Topology,
    placement: Placement,
    arrival_rate: float,
    dt: float,
    *,
    cluster: ClusterSpec | None = None,
    queues: dict[str, float] | None = None,
    queue_threshold: float = 1000.0,
    cross_vm_penalty_ms: float = 0.5,
) -> SimMetrics:
    """Advance the topology's queues by one window of dt seconds.

    External tuples arrive at source components (split evenly when there are
    several); each component drains min(queue + inflow, parallelism *
    service_rate * dt) and forwards outflow * selectivity, split evenly across
    its successors. `queues` carries state between calls; pass the previous
    step's queue_lengths to continue an evolution.
    """
    if dt <= 0:
        raise BoundsError(f"dt must be > 0, got {dt}")
    if arrival_rate < 0:
        raise BoundsError(f"arrival_rate must be >= 0, got {arrival_rate}")
    validate_placement(topology, placement, cluster)

    prev_q = dict(queues) if queues else {}
    inflow: dict[str, float] = {c.id: 0.0 for c in topology.components}
    sources = topology.sources()
    for cid in sources:
        inflow[cid] = arrival_rate * dt / len(sources)

    new_q: dict[str, float] = {}
    processed: dict[str, float] = {}
    total_capacity = 0.0
    for cid in topology.topological_order():
        comp = topology.component(cid)
        capacity = comp.parallelism * comp.service_rate * dt
        total_capacity += capacity
        q0 = prev_q.get(cid, 0.0)
        done = min(q0 + inflow[cid], capacity)
        new_q[cid] = q0 + inflow[cid] - done
        processed[cid] = done
        succs = topology.successors(cid)
        if succs:
            share = done * comp.selectivity / len(succs)
            for s in succs:
                inflow[s] += share

    throughput = sum(processed[cid] for cid in topology.sinks()) / dt

    latency = 0.0
    for cid in topology.topological_order():
        comp = topology.component(cid)
        rate = comp.parallelism * comp.service_rate
        latency += 1000.0 * new_q[cid] / rate
    for u, v in topology.edges:
        latency += cross_vm_penalty_ms * cross_vm_fraction(placement, u, v)

    total_processed = sum(processed.values())
    cpu_util = 100.0 * min(1.0, total_processed / total_capacity) if total_capacity else 0.0
    total_queue = sum(new_q.values())
    n_comp = len(topology.components)
    mem_util = 100.0 * min(1.0, total_queue / (queue_threshold * n_comp)) if n_comp else 0.0

    return SimMetrics(
        processing_time_ms=1000.0 * dt,
        throughput_tps=throughput,
        latency_ms=latency,
        queue_lengths=new_q,
        backpressure=any(q > queue_threshold for q in new_q.values()),
        cpu_util_pct=cpu_util,
        mem_util_pct=mem_util,
        infra_cost_rate=cluster.hourly_cost if cluster is not None else 0.0,
    )


def scale_cluster(
    cluster: ClusterSpec,
    delta_vms: int,
    vm: VmSpec,
    *,
    placement: Placement | None = None,
    vm_boot_ms: float = DEFAULT_VM_BOOT_MS,
) -> tuple[ClusterSpec, float]:
    """Add or remove VMs at the tail; returns the new spec and the reconfiguration delay.

    Removal is rejected if it would leave zero VMs or evict a replica that has
    not been rebalanced away first.
    """
    if delta_vms == 0:
        return cluster, 0.0
    if delta_vms > 0:
        return ClusterSpec(vms=cluster.vms + (vm,) * delta_vms), abs(delta_vms) * vm_boot_ms
    remaining = len(cluster.vms) + delta_vms
    if remaining < 1:
        raise CapacityError(
            f"cannot remove {-delta_vms} VM(s) from a cluster of {len(cluster.vms)}"
        )
    if placement is not None:
        doomed = set(range(remaining, len(cluster.vms)))
        for cid, vms in placement.assignments.items():
            hit = doomed.intersection(vms)
            if hit:
                raise CapacityError(
                    f"VM(s) {sorted(hit)} still host replicas of {cid!r}; rebalance first"
                )
    return ClusterSpec(vms=cluster.vms[:remaining]), abs(delta_vms) * vm_boot_ms
