"""Report emitters: the CSV files behind the processing-time, resource,
utilization, reward, and overhead views of a recorded run."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import NoDataError
from .telemetry import EventLogRecord, read_log
from .training import running_average

REPORT_FILES = (
    "frames_vs_time.csv",
    "resources_vs_fps.csv",
    "utilization_vs_fps.csv",
    "rewards.csv",
    "overhead.csv",
)


def _group_by_fps(records: list[EventLogRecord]) -> dict[int, list[EventLogRecord]]:
    groups: dict[int, list[EventLogRecord]] = {}
    for rec in records:
        groups.setdefault(rec.fps, []).append(rec)
    return dict(sorted(groups.items()))


def write_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Read <run_dir>/events.jsonl (+ timing.json) and emit the five report CSVs."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    events_path = run_dir / "events.jsonl"
    if not events_path.exists():
        raise NoDataError(f"no events.jsonl in {run_dir}")
    records = read_log(events_path).records
    if not records:
        raise NoDataError(f"no data: {events_path} contains no records")

    written = []
    groups = _group_by_fps(records)

    path = out_dir / "frames_vs_time.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fps", "mean_processing_time_ms", "min_ms", "max_ms", "samples"])
        for fps, recs in groups.items():
            times = [r.processing_time_ms for r in recs]
            w.writerow([fps, np.mean(times), min(times), max(times), len(times)])
    written.append(path)

    path = out_dir / "resources_vs_fps.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fps", "mean_cores", "mean_memory_mb", "mean_instances", "samples"])
        for fps, recs in groups.items():
            w.writerow(
                [
                    fps,
                    np.mean([r.cores for r in recs]),
                    np.mean([r.memory_mb for r in recs]),
                    np.mean([r.instances for r in recs]),
                    len(recs),
                ]
            )
    written.append(path)

    path = out_dir / "utilization_vs_fps.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fps", "mean_cpu_util_pct", "mean_mem_util_pct", "samples"])
        for fps, recs in groups.items():
            w.writerow(
                [
                    fps,
                    np.mean([r.cpu_util_pct for r in recs]),
                    np.mean([r.mem_util_pct for r in recs]),
                    len(recs),
                ]
            )
    written.append(path)

    path = out_dir / "rewards.csv"
    rewards = np.array([r.reward for r in records])
    run_avg = running_average(rewards)
    episodes = np.array([r.episode for r in records])
    ep_mean = {int(e): float(rewards[episodes == e].mean()) for e in np.unique(episodes)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,reward,running_avg_1000,episode,episodic_mean\n")
        for i, rec in enumerate(records):
            fh.write(
                f"{i + 1},{rewards[i]!r},{run_avg[i]!r},{rec.episode},"
                f"{ep_mean[rec.episode]!r}\n"
            )
    written.append(path)

    path = out_dir / "overhead.csv"
    timing_path = run_dir / "timing.json"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fps", "agent_s", "env_s", "agent_fraction"])
        if timing_path.exists():
            timing = json.loads(timing_path.read_text(encoding="utf-8"))
            by_fps: dict[int, list[float]] = {}
            for row in timing.get("episodes", []):
                agent_s, env_s = row["agent_s"], row["env_s"]
                acc = by_fps.setdefault(row["fps"], [0.0, 0.0])
                acc[0] += agent_s
                acc[1] += env_s
            for fps in sorted(by_fps):
                agent_s, env_s = by_fps[fps]
                total = agent_s + env_s
                w.writerow([fps, agent_s, env_s, agent_s / total if total else 0.0])
            agent_s = timing["totals"]["agent_s"]
            env_s = timing["totals"]["env_s"]
            total = agent_s + env_s
            w.writerow(["all", agent_s, env_s, agent_s / total if total else 0.0])
    written.append(path)

    return written
