"""Small fully-connected network with hand-written reverse-mode gradients.

The network is deliberately minimal: dense layers, tanh or relu hidden
activations, linear output, float64 throughout. Weights use the row-vector
convention, so a batch X of shape (B, d_in) maps to X @ W + b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")


@dataclass
class MLPParams:
    """Parameters of a fully-connected network.

    layer_sizes runs input dim -> hidden sizes -> output dim; weights[l] has
    shape (layer_sizes[l], layer_sizes[l+1]).
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != expected:
                raise ValueError(f"weight {l} has shape {w.shape}, expected {expected}")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ValueError(f"bias {l} has shape {b.shape}, expected ({self.layer_sizes[l + 1]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} contains non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MLPParams":
        return MLPParams(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


def init_mlp(layer_sizes, activation: str = "tanh", rng: np.random.Generator | None = None) -> MLPParams:
    """Glorot-uniform weights, zero biases."""
    rng = rng or np.random.default_rng()
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"layer_sizes must list at least input and output dims, got {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(layer_sizes=sizes, weights=weights, biases=biases, activation=activation)


def mlp_forward(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network on a batch.

    Returns (output, cache) where cache holds the post-activation input of
    every layer, as needed by mlp_backward.
    """
    h = np.asarray(x, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    if h.shape[1] != params.input_dim:
        raise ValueError(f"input has dimension {h.shape[1]}, expected {params.input_dim}")
    cache = [h]
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if l < last:
            h = np.tanh(z) if params.activation == "tanh" else np.maximum(z, 0.0)
        else:
            h = z
        cache.append(h)
    return (h[0] if squeeze else h), cache


def mlp_backward(
    params: MLPParams, cache: list[np.ndarray], grad_output: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Reverse-mode gradients for a batch forward pass.

    grad_output is dLoss/d(output), shape (B, output_dim). Returns
    (weight_grads, bias_grads, grad_input).
    """
    g = np.atleast_2d(np.asarray(grad_output, dtype=np.float64))
    if g.shape != np.atleast_2d(cache[-1]).shape:
        raise ValueError(
            f"grad_output shape {g.shape} does not match forward output "
            f"{np.atleast_2d(cache[-1]).shape}")
    weight_grads = [None] * len(params.weights)
    bias_grads = [None] * len(params.biases)
    last = len(params.weights) - 1
    for l in range(last, -1, -1):
        if l < last:
            out = cache[l + 1]
            if params.activation == "tanh":
                g = g * (1.0 - out * out)
            else:
                g = g * (out > 0.0)
        weight_grads[l] = cache[l].T @ g
        bias_grads[l] = g.sum(axis=0)
        g = g @ params.weights[l].T
    return weight_grads, bias_grads, g
