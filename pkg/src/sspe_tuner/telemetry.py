"""Metric collection, configuration snapshots, and the append-only JSON-lines event log.

Log files are byte-deterministic: records serialize in a fixed field order and
floats use Python's shortest round-trip representation.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import LogParseError, MetricLookupError, OrderingError

LOG_SCHEMA_VERSION = 1

# Serialization order of EventLogRecord fields.
RECORD_FIELDS = (
    "ts",
    "episode",
    "step",
    "fps",
    "partitions",
    "frames_per_partition",
    "cores",
    "memory_mb",
    "instances",
    "processing_time_ms",
    "reward",
    "epsilon",
    "loss",
    "cpu_util_pct",
    "mem_util_pct",
    "contention",
    "agent_role",
    "action_index",
    "applied",
)


@dataclass(frozen=True)
class MetricSample:
    timestamp: float
    name: str
    value: float
    tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise ValueError("metric name must be nonempty")
        if not isinstance(self.value, (int, float)) or self.value != self.value:
            raise ValueError(f"metric value must be finite, got {self.value!r}")


class MetricStore:
    """Append-only time series keyed by metric name; timestamps never regress."""

    def __init__(self):
        self._series: dict[str, list[MetricSample]] = {}

    def record(self, sample: MetricSample) -> None:
        series = self._series.setdefault(sample.name, [])
        if series and sample.timestamp < series[-1].timestamp:
            raise OrderingError(
                f"timestamp regression for {sample.name!r}: "
                f"{sample.timestamp} < {series[-1].timestamp}"
            )
        series.append(sample)

    def history(self, name: str) -> tuple[MetricSample, ...]:
        if name not in self._series:
            raise MetricLookupError(name)
        return tuple(self._series[name])

    def query_window(self, name: str, last_n: int, agg: str = "mean") -> float:
        if name not in self._series:
            raise MetricLookupError(name)
        if last_n < 1:
            raise ValueError(f"last_n must be >= 1, got {last_n}")
        window = [s.value for s in self._series[name][-last_n:]]
        if agg == "mean":
            return sum(window) / len(window)
        if agg == "max":
            return max(window)
        if agg == "min":
            return min(window)
        raise ValueError(f"unknown aggregate {agg!r}; expected mean, max, or min")


@dataclass
class EventLogRecord:
    """One environment step's telemetry; `extra` keeps unknown fields round-trippable."""

    ts: int
    episode: int
    step: int
    fps: int
    partitions: int
    frames_per_partition: int
    cores: int
    memory_mb: int
    instances: int
    processing_time_ms: float
    reward: float
    epsilon: float
    loss: float | None
    cpu_util_pct: float
    mem_util_pct: float
    contention: float
    action_index: int
    applied: bool
    agent_role: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in RECORD_FIELDS:
            out[name] = getattr(self, name)
        for key in sorted(self.extra):
            out[key] = self.extra[key]
        return out

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any]) -> "EventLogRecord":
        missing = [name for name in RECORD_FIELDS if name not in obj and name != "agent_role"]
        if missing:
            raise LogParseError(f"record missing fields {missing}")
        extra = {k: v for k, v in obj.items() if k not in RECORD_FIELDS}
        kwargs = {name: obj.get(name) for name in RECORD_FIELDS}
        return cls(**kwargs, extra=extra)


def encode_record(record: EventLogRecord) -> str:
    return json.dumps(record.to_json_dict(), separators=(",", ":"), allow_nan=False)


def append_log(path: str | Path, record: EventLogRecord) -> None:
    """Append one record as a newline-terminated JSON object."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(encode_record(record) + "\n")


@dataclass
class LogReadResult:
    records: list[EventLogRecord]
    warnings: int = 0
    header: dict[str, Any] | None = None


def read_log(path: str | Path) -> LogReadResult:
    """Read a JSON-lines event log.

    A leading header object (carries schema_version, no step field) is exposed
    separately. A malformed interior line raises with its 1-based line number;
    a partial trailing line is skipped and counted as a warning.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    result = LogReadResult(records=[])
    for idx, line in enumerate(lines):
        line_no = idx + 1
        is_last = idx == len(lines) - 1
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise LogParseError(f"line {line_no}: expected a JSON object", line=line_no)
            if idx == 0 and "schema_version" in obj and "step" not in obj:
                result.header = obj
                continue
            result.records.append(EventLogRecord.from_json_dict(obj))
        except (json.JSONDecodeError, LogParseError) as exc:
            if is_last:
                result.warnings += 1
                continue
            if isinstance(exc, LogParseError):
                raise LogParseError(f"line {line_no}: {exc}", line=line_no) from None
            raise LogParseError(f"line {line_no}: invalid JSON", line=line_no) from None
    return result


class EventLog:
    """Writer bound to one events.jsonl file; emits the header on first use."""

    def __init__(self, path: str | Path, run_config_hash: str = ""):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        header = {"schema_version": LOG_SCHEMA_VERSION, "run_config_hash": run_config_hash}
        with open(self.path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")

    def append(self, record: EventLogRecord) -> None:
        append_log(self.path, record)


@dataclass(frozen=True)
class ConfigSnapshot:
    """Immutable copy of the world's tunable state at one step."""

    executor_config: Any
    topology_parallelisms: dict[str, int]
    placement: dict[str, tuple[int, ...]]
    cluster_vms: tuple[Any, ...]
    tuner_values: dict[str, Any]
    taken_at: int


def snapshot_config(world) -> ConfigSnapshot:
    """Deep-copy the tunable state of a world object; later mutation cannot leak in."""
    return ConfigSnapshot(
        executor_config=copy.deepcopy(world.executor_config),
        topology_parallelisms={
            c.id: c.parallelism for c in world.topology.components
        },
        placement=copy.deepcopy(world.placement.assignments),
        cluster_vms=tuple(world.cluster.vms),
        tuner_values=copy.deepcopy(world.tuner_values),
        taken_at=world.step_index,
    )
