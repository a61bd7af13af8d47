"""Offline replay seeding: rebuild transitions from an event-log trace and
train on them before any online interaction."""

from __future__ import annotations

import numpy as np

from ..env import Transition, observation_from_scalars
from ..errors import LogParseError
from ..simcore import ExecutorConfig
from ..telemetry import EventLogRecord
from .network import Hyperparams, QNetwork, train_step
from .replay import ReplayBuffer


def _record_observation(rec: EventLogRecord) -> np.ndarray:
    config = ExecutorConfig(cores=rec.cores, memory_mb=rec.memory_mb, instances=rec.instances)
    return observation_from_scalars(
        rec.fps, config, rec.processing_time_ms, rec.cpu_util_pct, rec.mem_util_pct,
        backpressure=False,
    )


def transitions_from_trace(trace: list[EventLogRecord]) -> list[Transition]:
    """Pair consecutive same-episode records into transitions.

    The record at step k supplies the state; the record at step k+1 supplies
    the action taken from it, the reward, and the next state. The final record
    of each episode closes with done=True.
    """
    transitions: list[Transition] = []
    for i, rec in enumerate(trace):
        try:
            _record_observation(rec)
        except Exception as exc:
            raise LogParseError(f"record {i}: {exc}", line=i) from exc
    for prev, cur, i in zip(trace, trace[1:], range(1, len(trace))):
        if cur.episode != prev.episode:
            continue
        if cur.step != prev.step + 1:
            raise LogParseError(
                f"record {i}: step {cur.step} does not follow {prev.step} in episode "
                f"{cur.episode}", line=i,
            )
        done = i + 1 >= len(trace) or trace[i + 1].episode != cur.episode
        transitions.append(
            Transition(
                state=_record_observation(prev),
                action=cur.action_index,
                reward=cur.reward,
                next_state=_record_observation(cur),
                done=done,
            )
        )
    return transitions


def pretrain_from_trace(
    net: QNetwork,
    trace: list[EventLogRecord],
    h: Hyperparams,
    *,
    replay: ReplayBuffer | None = None,
    rng: np.random.Generator | None = None,
    epochs: int | None = None,
) -> int:
    """Seed the replay buffer from a trace and run offline training epochs.

    One epoch makes len(buffer) // batch_size training steps (at least one when
    the buffer is smaller than a batch). Returns the number of epochs trained;
    an empty trace trains nothing and leaves the net untouched.
    """
    transitions = transitions_from_trace(trace)
    if replay is None:
        replay = ReplayBuffer(h.replay_capacity)
    for t in transitions:
        replay.push(t)
    if len(replay) == 0:
        return 0

    rng = rng if rng is not None else np.random.default_rng(0)
    epochs = h.pretrain_epochs if epochs is None else epochs
    target = net.copy()
    steps_per_epoch = max(1, len(replay) // h.batch_size)
    trained = 0
    step_count = 0
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            batch_size = min(h.batch_size, len(replay))
            batch = replay.sample(batch_size, rng)
            train_step(net, target, batch, h)
            step_count += 1
            if step_count % h.target_sync_interval == 0:
                target = net.copy()
        trained += 1
    return trained
