"""Deep Q-network: multilayer perceptron, epsilon-greedy policy, Bellman-target
SGD training, and a finite-difference gradient check.

Everything runs in double precision; the optimizer is plain stochastic
gradient descent so analytic gradients stay directly checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import Transition
from ..errors import ShapeError
from . import _backend


@dataclass
class Hyperparams:
    gamma: float = 0.95
    epsilon: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    learning_rate: float = 0.001
    max_episodes: int = 500
    replay_capacity: int = 10_000
    batch_size: int = 32
    hidden_layers: tuple[int, ...] = (64, 64)
    target_sync_interval: int = 200
    pretrain_epochs: int = 10
    q_init: float = 0.0  # initial output bias; > 0 gives optimistic exploration

    def __post_init__(self):
        self.hidden_layers = tuple(int(w) for w in self.hidden_layers)
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0,1), got {self.gamma}")
        if not 0 < self.epsilon_min <= self.epsilon <= 1:
            raise ValueError(
                f"need 0 < epsilon_min <= epsilon <= 1, got {self.epsilon_min}, {self.epsilon}"
            )
        if not 0 < self.epsilon_decay < 1:
            raise ValueError(f"epsilon_decay must be in (0,1), got {self.epsilon_decay}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("batch_size and replay_capacity must be >= 1")
        if self.max_episodes < 1:
            raise ValueError(f"max_episodes must be >= 1, got {self.max_episodes}")
        if self.target_sync_interval < 1:
            raise ValueError(f"target_sync_interval must be >= 1, got {self.target_sync_interval}")
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError(f"hidden layer widths must be >= 1, got {self.hidden_layers}")


@dataclass
class QNetwork:
    """MLP mapping an observation to one Q-value per action."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def create(
        cls, input_dim: int, output_dim: int, hidden_layers: tuple[int, ...],
        rng: np.random.Generator, q_init: float = 0.0,
    ) -> "QNetwork":
        sizes = (input_dim, *hidden_layers, output_dim)
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            biases.append(np.zeros(fan_out))
        biases[-1] += q_init
        return cls(layer_sizes=sizes, weights=weights, biases=biases)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_actions(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "QNetwork":
        return QNetwork(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def forward(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.input_dim,):
            raise ShapeError(
                f"state shape {state.shape} does not match input dim {self.input_dim}"
            )
        return _backend.forward_batch(self.weights, self.biases, state[None, :])[0]

    def forward_batch(self, states: np.ndarray) -> np.ndarray:
        states = np.ascontiguousarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != self.input_dim:
            raise ShapeError(
                f"batch shape {states.shape} does not match input dim {self.input_dim}"
            )
        return _backend.forward_batch(self.weights, self.biases, states)


def forward(net: QNetwork, state: np.ndarray) -> np.ndarray:
    return net.forward(state)


def select_action(
    net: QNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy over the network's Q-values, argmax ties to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(net.forward(state)))


def decay_epsilon(h: Hyperparams, epsilon: float | None = None) -> float:
    """One per-episode decay step: max(epsilon_min, epsilon * epsilon_decay)."""
    current = h.epsilon if epsilon is None else epsilon
    return max(h.epsilon_min, current * h.epsilon_decay)


def _batch_arrays(batch: list[Transition]):
    states = np.stack([t.state for t in batch]).astype(np.float64)
    actions = np.array([t.action for t in batch], dtype=np.int64)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    next_states = np.stack([t.next_state for t in batch]).astype(np.float64)
    done = np.array([t.done for t in batch], dtype=bool)
    return states, actions, rewards, next_states, done


def bellman_targets(
    target_net: QNetwork, rewards: np.ndarray, next_states: np.ndarray,
    done: np.ndarray, gamma: float,
) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * max_a' Q_target(s', a')."""
    q_next = target_net.forward_batch(next_states)
    return rewards + gamma * q_next.max(axis=1) * (~done)


def train_step(
    net: QNetwork, target_net: QNetwork, batch: list[Transition], h: Hyperparams
) -> float:
    """One SGD step on the Bellman MSE loss; returns the pre-update loss.

    Targets are computed against target_net before any update, so they are
    frozen within the step; only `net` is mutated.
    """
    if not batch:
        raise ValueError("train_step requires a nonempty batch")
    states, actions, rewards, next_states, done = _batch_arrays(batch)
    targets = bellman_targets(target_net, rewards, next_states, done, h.gamma)
    loss, grad_w, grad_b = _backend.loss_grads(net.weights, net.biases, states, actions, targets)
    for w, gw in zip(net.weights, grad_w):
        w -= h.learning_rate * gw
    for b, gb in zip(net.biases, grad_b):
        b -= h.learning_rate * gb
    return loss


def grad_check(net: QNetwork, batch: list[Transition], step: float = 1e-5) -> float:
    """Max relative error between analytic and central finite-difference gradients.

    Bellman targets are computed once against a frozen copy of the net and held
    constant, matching what the analytic gradient assumes.
    """
    if not batch:
        raise ValueError("grad_check requires a nonempty batch")
    states, actions, rewards, next_states, done = _batch_arrays(batch)
    targets = bellman_targets(net.copy(), rewards, next_states, done, gamma=0.95)

    _, grad_w, grad_b = _backend.loss_grads(net.weights, net.biases, states, actions, targets)

    def loss_at() -> float:
        loss, _, _ = _backend.loss_grads(net.weights, net.biases, states, actions, targets)
        return loss

    worst = 0.0
    for params, grads in ((net.weights, grad_w), (net.biases, grad_b)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_at()
                flat[i] = orig - step
                down = loss_at()
                flat[i] = orig
                numeric = (up - down) / (2.0 * step)
                denom = max(abs(gflat[i]) + abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def gradient_norm(net: QNetwork, batch: list[Transition], targets: np.ndarray) -> float:
    """L2 norm of the loss gradient for a batch with explicit targets."""
    states, actions, _, _, _ = _batch_arrays(batch)
    _, grad_w, grad_b = _backend.loss_grads(net.weights, net.biases, states, actions, targets)
    total = 0.0
    for g in (*grad_w, *grad_b):
        total += float(np.sum(g**2))
    return float(np.sqrt(total))
