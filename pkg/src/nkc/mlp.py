"""Fully connected ReLU network with hand-written reverse mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("linear", "relu")


@dataclass
class Mlp:
    """Network ``h(x)``: affine layers, ReLU between them, configurable output activation.

    ``weights[k]`` has shape ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(n, d_x)`` maps through ``x @ W + b``.
    """

    weights: list
    biases: list
    output_activation: str = "linear"

    def __post_init__(self):
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} inconsistent with bias {b.shape}")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k}: fan_in {w.shape[0]} != previous fan_out")

    @classmethod
    def init(cls, seed, layer_dims, output_activation: str = "linear") -> "Mlp":
        """He-normal weights, zero biases."""
        if len(layer_dims) < 2 or any(int(d) < 1 for d in layer_dims):
            raise ValueError(f"layer dims must be positive, got {layer_dims}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, output_activation)

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list:
        """Parameter arrays in the canonical order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = theta[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[k] = theta[pos:pos + b.size].copy()
            pos += b.size

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output_activation)

    def forward(self, x):
        """Return ``(h, cache)``; ``x`` may be ``(d_x,)`` or ``(n, d_x)``."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.d_in:
            raise ValueError(f"expected input with {self.d_in} columns, got shape {x.shape}")
        inputs, pre = [], []
        n_layers = len(self.weights)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            last = k == n_layers - 1
            a = z if (last and self.output_activation == "linear") else np.maximum(z, 0.0)
        cache = {"inputs": inputs, "pre": pre, "single": single, "dims": tuple(self.layer_dims)}
        return (a[0] if single else a), cache

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_h) -> list:
        """Gradient of ``sum(grad_h * h)`` with respect to ``[W0, b0, W1, b1, ...]``.

        The ReLU subgradient at zero is taken as zero.
        """
        if cache.get("dims") != tuple(self.layer_dims):
            raise ValueError("cache does not come from a forward pass of this network")
        g = np.asarray(grad_h, dtype=np.float64)
        if cache["single"]:
            g = g[None, :]
        if g.shape != cache["pre"][-1].shape:
            raise ValueError(f"grad_h shape {g.shape} does not match output {cache['pre'][-1].shape}")
        n_layers = len(self.weights)
        grads = [None] * (2 * n_layers)
        for k in range(n_layers - 1, -1, -1):
            last = k == n_layers - 1
            if not (last and self.output_activation == "linear"):
                g = g * (cache["pre"][k] > 0.0)
            grads[2 * k] = cache["inputs"][k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k:
                g = g @ self.weights[k].T
        return grads

    def to_dict(self) -> dict:
        return {
            "layer_dims": self.layer_dims,
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(d["weights"], d["biases"], d["output_activation"])


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a).ravel() for a in arrays])
