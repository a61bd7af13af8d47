"""Checkpoint persistence: a single JSON document that round-trips bit-exactly.

Schema: {schema_version, layer_sizes, weights, biases, hyperparams, rng_state?}.
Weights serialize as row-major nested lists; Python's float repr guarantees the
exact double round-trip.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import CheckpointIntegrityError, ShapeError
from .network import Hyperparams, QNetwork

CHECKPOINT_SCHEMA_VERSION = 1


def save_checkpoint(
    net: QNetwork, h: Hyperparams, path: str | Path, rng_state: dict[str, Any] | None = None
) -> None:
    doc: dict[str, Any] = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "hyperparams": asdict(h),
    }
    if rng_state is not None:
        doc["rng_state"] = rng_state
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[QNetwork, Hyperparams]:
    net, h, _ = load_checkpoint_full(path)
    return net, h


def load_checkpoint_full(
    path: str | Path,
) -> tuple[QNetwork, Hyperparams, dict[str, Any] | None]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointIntegrityError("document", f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointIntegrityError("document", "checkpoint is not a JSON object")

    for name in ("schema_version", "layer_sizes", "weights", "biases", "hyperparams"):
        if name not in doc:
            raise CheckpointIntegrityError(name, f"checkpoint missing field '{name}'")
    if doc["schema_version"] != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointIntegrityError(
            "schema_version", f"unsupported schema_version {doc['schema_version']!r}"
        )

    layer_sizes = tuple(int(s) for s in doc["layer_sizes"])
    if len(layer_sizes) < 2:
        raise CheckpointIntegrityError("layer_sizes", "need at least input and output layers")
    n_layers = len(layer_sizes) - 1
    if len(doc["weights"]) != n_layers or len(doc["biases"]) != n_layers:
        raise ShapeError(
            f"checkpoint declares {n_layers} layers but carries "
            f"{len(doc['weights'])} weight and {len(doc['biases'])} bias arrays"
        )

    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for l in range(n_layers):
        try:
            w = np.array(doc["weights"][l], dtype=np.float64)
            b = np.array(doc["biases"][l], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise CheckpointIntegrityError("weights", f"layer {l}: non-numeric data") from exc
        expect = (layer_sizes[l], layer_sizes[l + 1])
        if w.shape != expect:
            raise ShapeError(
                f"layer {l} weight shape {w.shape} does not match layer_sizes {expect}"
            )
        if b.shape != (layer_sizes[l + 1],):
            raise ShapeError(
                f"layer {l} bias shape {b.shape} does not match width {layer_sizes[l + 1]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise CheckpointIntegrityError("weights", f"layer {l}: non-finite parameter")
        weights.append(w)
        biases.append(b)

    try:
        hp = doc["hyperparams"]
        hp["hidden_layers"] = tuple(hp["hidden_layers"])
        h = Hyperparams(**hp)
    except (TypeError, KeyError, ValueError) as exc:
        raise CheckpointIntegrityError("hyperparams", f"invalid hyperparams: {exc}") from exc

    net = QNetwork(layer_sizes=layer_sizes, weights=weights, biases=biases)
    return net, h, doc.get("rng_state")
