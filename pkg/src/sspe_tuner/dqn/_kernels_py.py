"""Pure-numpy MLP kernels: the fallback used when the compiled extension is absent.

Weight matrices are (fan_in, fan_out), float64, C-contiguous. Hidden layers use
the rectifier; the output layer is linear.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def forward_batch(
    weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray
) -> np.ndarray:
    a = x
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        a = a @ w + b
        if l < last:
            np.maximum(a, 0.0, out=a)
    return a


def loss_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE loss on the taken actions' Q-values plus its parameter gradients."""
    batch = x.shape[0]
    last = len(weights) - 1

    activations = [x]
    a = x
    for l, (w, b) in enumerate(zip(weights, biases)):
        a = a @ w + b
        if l < last:
            np.maximum(a, 0.0, out=a)
        activations.append(a)

    q = activations[-1]
    idx = np.arange(batch)
    err = q[idx, actions] - targets
    loss = float(np.mean(err**2))

    dq = np.zeros_like(q)
    dq[idx, actions] = 2.0 * err / batch

    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(weights)
    delta = dq
    for l in range(last, -1, -1):
        grad_w[l] = activations[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights[l].T) * (activations[l] > 0.0)
    return loss, grad_w, grad_b
