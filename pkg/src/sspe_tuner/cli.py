"""Operator entry point: train, evaluate, compare, oracle, report.

Exit codes: 0 success, 1 configuration validation error, 2 runtime error.
SSPE_TUNER_LOG selects log verbosity (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .config import RunConfig, load_config
from .dqn.checkpoint import load_checkpoint
from .errors import ConfigValidationError, SspeError
from .evaluation import compare, evaluate, greedy_policy, oracle_table, training_curve_stats
from .reporting import write_report
from .training import train

log = logging.getLogger("sspe_tuner")


def _setup_logging() -> None:
    level = os.environ.get("SSPE_TUNER_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigValidationError(["--config is required for this command"])
    return load_config(args.config, seed=args.seed, out_dir=args.out)


def cmd_train(args) -> int:
    config = _load(args)
    result = train(config, resume=args.resume)
    log.info(
        "trained %d episodes (%d steps) into %s", result.episodes, result.steps, result.run_dir
    )
    print(f"run directory: {result.run_dir}")
    print(f"steps: {result.steps}  episodes: {result.episodes}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_oracle(args) -> int:
    config = _load(args)
    rows = oracle_table(config)
    out_path = Path(config.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    table_path = out_path / "oracle.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["fps", "best_cores", "best_memory_mb", "best_instances",
             "best_time_ms", "worst_time_ms", "mean_time_ms"]
        )
        for r in rows:
            w.writerow(
                [r.fps, r.best_cores, r.best_memory_mb, r.best_instances,
                 r.best_time_ms, r.worst_time_ms, r.mean_time_ms]
            )
    print(f"{'fps':>4} {'best config':>18} {'best ms':>10} {'worst ms':>10} {'mean ms':>10}")
    for r in rows:
        cfg = f"({r.best_cores},{r.best_memory_mb},{r.best_instances})"
        print(
            f"{r.fps:>4} {cfg:>18} {r.best_time_ms:>10.1f} "
            f"{r.worst_time_ms:>10.1f} {r.mean_time_ms:>10.2f}"
        )
    print(f"written: {table_path}")
    return 0


def cmd_compare(args) -> int:
    config = _load(args)
    if not args.checkpoint:
        raise ConfigValidationError(["--checkpoint is required for compare"])
    net, _ = load_checkpoint(args.checkpoint)
    rows = compare(config, greedy_policy(net))
    out_path = Path(config.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    table_path = out_path / "compare.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["fps", "drl_mean_ms", "random_mean_ms", "improvement_pct", "drl_mean_cores",
             "drl_mean_memory_mb", "drl_mean_instances", "agent_decision_overhead_ms"]
        )
        for r in rows:
            w.writerow(
                [r.fps, r.drl_mean_ms, r.random_mean_ms, r.improvement_pct, r.drl_mean_cores,
                 r.drl_mean_memory_mb, r.drl_mean_instances, r.agent_decision_overhead_ms]
            )
    print(f"{'fps':>4} {'drl ms':>9} {'random ms':>10} {'improve %':>10} {'decide ms':>10}")
    for r in rows:
        print(
            f"{r.fps:>4} {r.drl_mean_ms:>9.1f} {r.random_mean_ms:>10.1f} "
            f"{r.improvement_pct:>10.1f} {r.agent_decision_overhead_ms:>10.3f}"
        )
    print(f"written: {table_path}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load(args)
    if not args.checkpoint:
        raise ConfigValidationError(["--checkpoint is required for evaluate"])
    net, _ = load_checkpoint(args.checkpoint)
    summary = evaluate(config, net)

    events_path = Path(config.out_dir) / "events.jsonl"
    if events_path.exists():
        final_avg, plateau = training_curve_stats(Path(config.out_dir))
        summary.training_final_running_avg = final_avg
        summary.training_plateau_stat = plateau

    print(f"greedy rollout steps: {summary.steps}")
    print(f"final running-average reward: {summary.final_running_avg:.6e}")
    print(f"plateau statistic (std/mean, final 20%): {summary.plateau_stat:.4f}")
    if summary.slo_satisfaction_rate is not None:
        print(f"SLO satisfaction rate: {summary.slo_satisfaction_rate:.3f}")
    else:
        print("SLO satisfaction rate: n/a (no SLO configured)")
    if summary.training_final_running_avg is not None:
        print(f"training final running-average reward: {summary.training_final_running_avg:.6e}")
        print(f"training plateau statistic: {summary.training_plateau_stat:.4f}")
    out_path = Path(config.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    (out_path / "summary.json").write_text(json.dumps(asdict(summary), indent=1))
    return 0


def cmd_report(args) -> int:
    run_dir = args.out
    if run_dir is None and args.config:
        run_dir = _load(args).out_dir
    if run_dir is None:
        raise ConfigValidationError(["report needs --out <run_dir> or --config"])
    files = write_report(run_dir)
    for f in files:
        print(f"written: {f}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sspe-tuner",
        description="Train and evaluate a DQN auto-tuner on the simulated stream cluster.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="run configuration JSON file")
    parser.add_argument("--checkpoint", help="checkpoint JSON file")
    parser.add_argument("--out", help="output/run directory override")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument(
        "--resume", action="store_true", help="resume training from the latest checkpoint"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SspeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; latest checkpoint retained", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
