"""Small numpy networks with hand-written backward passes.

Inputs are D x B (columns are samples). The encoder always ends with a
column-wise l2 normalization, so its outputs are unit vectors.
"""

from __future__ import annotations

import numpy as np


class Encoder:
    """Affine map or two-layer tanh perceptron followed by l2 normalization."""

    def __init__(self, input_dim, out_dim, hidden=32, kind="mlp", rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.kind = kind
        if kind == "mlp":
            self.params = {
                "w1": rng.standard_normal((hidden, input_dim)) / np.sqrt(input_dim),
                "b1": np.zeros((hidden, 1)),
                "w2": rng.standard_normal((out_dim, hidden)) / np.sqrt(hidden),
                "b2": np.zeros((out_dim, 1)),
            }
        elif kind == "affine":
            self.params = {
                "w2": rng.standard_normal((out_dim, input_dim)) / np.sqrt(input_dim),
                "b2": np.zeros((out_dim, 1)),
            }
        else:
            raise ValueError(f"unknown encoder kind {kind!r}")

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def forward(self, x):
        p = self.params
        cache = {"x": x}
        if self.kind == "mlp":
            a = np.tanh(p["w1"] @ x + p["b1"])
            cache["a"] = a
        else:
            a = x
        y = p["w2"] @ a + p["b2"]
        norm = np.linalg.norm(y, axis=0, keepdims=True)
        z = y / norm
        cache.update(a_in=a, z=z, norm=norm)
        return z, cache

    def backward(self, dz, cache):
        p = self.params
        z, norm, a = cache["z"], cache["norm"], cache["a_in"]
        dy = (dz - z * np.sum(z * dz, axis=0, keepdims=True)) / norm
        grads = {"w2": dy @ a.T, "b2": dy.sum(axis=1, keepdims=True)}
        if self.kind == "mlp":
            da = p["w2"].T @ dy
            dpre = da * (1.0 - cache["a"] ** 2)
            grads["w1"] = dpre @ cache["x"].T
            grads["b1"] = dpre.sum(axis=1, keepdims=True)
        return grads


class Decoder:
    """Affine map from representations back to input space."""

    def __init__(self, in_dim, output_dim, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.params = {
            "w": rng.standard_normal((output_dim, in_dim)) / np.sqrt(in_dim),
            "b": np.zeros((output_dim, 1)),
        }

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def forward(self, z):
        return self.params["w"] @ z + self.params["b"], {"z": z}

    def backward(self, dout, cache):
        grads = {"w": dout @ cache["z"].T, "b": dout.sum(axis=1, keepdims=True)}
        return grads, self.params["w"].T @ dout


def add_grads(a, b):
    return {k: a[k] + b[k] for k in a}


def sgd_step(params, grads, lr):
    for k, g in grads.items():
        params[k] -= lr * g
