"""Feedforward MLP trained by reverse-mode chain rule.

Kept deliberately minimal (no momentum, no regularization): it is the
comparison baseline and the exact-gradient oracle the settling-based
learners are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .numerics import activation_apply, activation_deriv, glorot_uniform

HEADS = ("squared_error", "softmax_nll")


@dataclass
class MLP:
    """weights[k] has shape (layer_dims[k+1], layer_dims[k]).

    Hidden layers apply ``activation``; the output layer is an identity
    head with squared error or a fused softmax with negative
    log-likelihood.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    activation: str = "tanh"
    head: str = "squared_error"

    def __post_init__(self) -> None:
        dims = [int(d) for d in self.layer_dims]
        if len(self.weights) != len(dims) - 1:
            raise ValueError(f"expected {len(dims) - 1} weight matrices")
        ws = []
        for k, w in enumerate(self.weights):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (dims[k + 1], dims[k]):
                raise ValueError(
                    f"weights[{k}] has shape {w.shape}, expected {(dims[k + 1], dims[k])}"
                )
            ws.append(w)
        self.weights = ws
        self.layer_dims = dims
        if self.head not in HEADS:
            raise ValueError(f"unknown output head {self.head!r}; choose from {HEADS}")

    @classmethod
    def random(
        cls,
        layer_dims: Sequence[int],
        activation: str,
        rng: np.random.Generator,
        head: str = "squared_error",
    ) -> "MLP":
        dims = list(layer_dims)
        weights = [glorot_uniform(rng, dims[k + 1], dims[k]) for k in range(len(dims) - 1)]
        return cls(dims, weights, activation, head)


def _softmax(h: np.ndarray) -> np.ndarray:
    z = h - h.max(axis=0, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=0, keepdims=True)


def mlp_forward(m: MLP, o: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Forward pass keeping all intermediates for the backward pass.

    Returns (pre-activations h_1..h_K, post-activations z_0..z_K, output).
    The output equals h_K for the squared-error head and the softmax
    probabilities for the nll head.
    """
    o = np.asarray(o, dtype=np.float64)
    if o.shape[0] != m.layer_dims[0]:
        raise ValueError(f"input has leading dim {o.shape[0]}, expected {m.layer_dims[0]}")
    hs: list[np.ndarray] = []
    zs: list[np.ndarray] = [o]
    K = len(m.weights)
    for k, w in enumerate(m.weights):
        h = w @ zs[-1]
        hs.append(h)
        if k < K - 1:
            zs.append(activation_apply(m.activation, h))
        else:
            zs.append(_softmax(h) if m.head == "softmax_nll" else h)
    return hs, zs, zs[-1]


def mlp_backprop(
    m: MLP, intermediates: tuple[list[np.ndarray], list[np.ndarray], np.ndarray], y: np.ndarray
) -> list[np.ndarray]:
    """Exact loss gradients per weight matrix, batch-averaged.

    Both heads reduce to the same fused output delta: output minus target.
    """
    hs, zs, out = intermediates
    y = np.asarray(y, dtype=np.float64)
    if y.shape != out.shape:
        raise ValueError(f"target shape {y.shape} does not match output {out.shape}")
    B = out.shape[1] if out.ndim == 2 else 1
    delta = out - y
    grads: list[np.ndarray] = [None] * len(m.weights)
    for k in range(len(m.weights) - 1, -1, -1):
        z_prev = zs[k]
        if delta.ndim == 1:
            grads[k] = np.outer(delta, z_prev)
        else:
            grads[k] = (delta @ z_prev.T) / B
        if k > 0:
            delta = (m.weights[k].T @ delta) * activation_deriv(m.activation, hs[k - 1])
    return grads


def sgd_step(m: MLP, grads: list[np.ndarray], eta: float) -> MLP:
    """Plain gradient descent: W <- W - eta * grad."""
    if not (np.isfinite(eta) and eta > 0):
        raise ValueError("eta must be finite and positive")
    if len(grads) != len(m.weights):
        raise ValueError("one gradient per weight matrix expected")
    new = []
    for w, g in zip(m.weights, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match weight {w.shape}")
        new.append(w - eta * g)
    return replace(m, weights=new)


def mlp_loss(m: MLP, out: np.ndarray, y: np.ndarray) -> float:
    """Mean per-example loss matching the configured head."""
    y = np.asarray(y, dtype=np.float64)
    B = out.shape[1] if out.ndim == 2 else 1
    if m.head == "squared_error":
        return 0.5 * float(np.sum((out - y) ** 2)) / B
    p = np.clip(out, 1e-300, None)
    return -float(np.sum(y * np.log(p))) / B
