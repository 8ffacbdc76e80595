"""Biased competition with divisive input modulation.

Error units divide activity by its reconstruction instead of subtracting,
and value nodes update multiplicatively, so activities and synapses stay
non-negative throughout and well-reconstructed inputs drive the error
units to unity. The feedback pathway is the transpose of the forward
matrix with columns rescaled to unit sum; with that normalization each
multiplicative sweep of a single-layer model is exactly the classic
generalized-KL descent step of multiplicative matrix factorization. The
older additive biased-competition step is also provided.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


@dataclass
class BCDIMNetwork:
    """Non-negative weight stack; W[l] predicts layer l from layer l+1.

    Feedback matrices are derived, never stored: ``feedback(l)`` returns
    the transpose of W[l] with unit-sum columns. Optional attention
    matrices map external feature vectors into a layer. eps1 guards the
    divisive error, eps2 lets states escape a zero floor.
    """

    layer_dims: list[int]
    W: list[np.ndarray]
    attention: Optional[list[Optional[np.ndarray]]] = None
    eps1: float = 1e-6
    eps2: float = 1e-6
    beta: float = 0.1
    beta_m: float = 0.0
    beta_a: float = 0.0

    def __post_init__(self) -> None:
        dims = [int(d) for d in self.layer_dims]
        self.layer_dims = dims
        L = len(dims) - 1
        if len(self.W) != L:
            raise ValueError(f"expected {L} weight matrices")
        for l in range(L):
            w = np.asarray(self.W[l], dtype=np.float64)
            if w.shape != (dims[l], dims[l + 1]):
                raise ValueError(f"W[{l}] has shape {w.shape}, expected {(dims[l], dims[l+1])}")
            if np.any(w < 0):
                raise ValueError(f"W[{l}] has negative entries")
            self.W[l] = w
        if self.attention is not None:
            for l, a in enumerate(self.attention):
                if a is None:
                    continue
                a = np.asarray(a, dtype=np.float64)
                if a.shape[0] != dims[l] or np.any(a < 0):
                    raise ValueError(f"attention[{l}] must be non-negative with {dims[l]} rows")
                self.attention[l] = a
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("eps1 and eps2 must be >= 0")

    @property
    def depth(self) -> int:
        return len(self.layer_dims) - 1

    def feedback(self, l: int) -> np.ndarray:
        """Transpose of W[l] with each column rescaled to unit sum."""
        w = self.W[l]
        sums = w.sum(axis=0)
        return (w / np.maximum(sums, 1e-300)).T

    @classmethod
    def random(
        cls, layer_dims: Sequence[int], rng: np.random.Generator, **kwargs
    ) -> "BCDIMNetwork":
        dims = list(layer_dims)
        W = [rng.uniform(0.1, 1.0, size=(dims[l], dims[l + 1])) for l in range(len(dims) - 1)]
        return cls(dims, W, **kwargs)


@dataclass
class BCDIMStates:
    """Non-negative value vectors, derived divisive errors, and optional
    externally clamped attention inputs per layer."""

    x: list[np.ndarray]
    e: list[np.ndarray] = field(default_factory=list)
    attention_inputs: Optional[list[Optional[np.ndarray]]] = None


def _check_nonneg(name: str, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError(f"{name} has negative entries; this model is non-negative by design")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _check_x(net: BCDIMNetwork, x: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(x) != net.depth + 1:
        raise ValueError(f"expected {net.depth + 1} state vectors, got {len(x)}")
    out = []
    for l, v in enumerate(x):
        v = _check_nonneg(f"states[{l}]", v)
        if v.shape[0] != net.layer_dims[l]:
            raise ValueError(f"state {l} has leading dim {v.shape[0]}, expected {net.layer_dims[l]}")
        out.append(v)
    return out


def bcdim_error(net: BCDIMNetwork, states: BCDIMStates, level: int) -> np.ndarray:
    """Divisive error at a level: e_l = x_l / (eps1 + W[l] x_{l+1})."""
    x = _check_x(net, states.x)
    if not 0 <= level < net.depth:
        raise ValueError(f"level must lie in [0, {net.depth - 1}]")
    recon = net.W[level] @ x[level + 1]
    return x[level] / (net.eps1 + recon)


def _all_errors(net: BCDIMNetwork, x: list[np.ndarray]) -> list[np.ndarray]:
    return [x[l] / (net.eps1 + net.W[l] @ x[l + 1]) for l in range(net.depth)]


def _attn_drive(net: BCDIMNetwork, states: BCDIMStates, l: int) -> np.ndarray:
    if (
        net.attention is None
        or l >= len(net.attention)
        or net.attention[l] is None
        or states.attention_inputs is None
        or states.attention_inputs[l] is None
    ):
        return np.zeros_like(states.x[l])
    a_in = _check_nonneg(f"attention input {l}", states.attention_inputs[l])
    return net.attention[l] @ a_in


def bcdim_state_update(net: BCDIMNetwork, states: BCDIMStates) -> BCDIMStates:
    """One multiplicative sweep; layer 0 stays clamped.

    x_l <- (eps2 + x_l) * (fb(l) e_{l-1}) followed by the modulation factor
    1 + beta * (W[l+1]-normalized skip drive + attention drive). The top
    layer only receives the bottom-up factor.
    """
    x = _check_x(net, states.x)
    errs = _all_errors(net, x)
    new_x = [x[0]]
    for l in range(1, net.depth + 1):
        bottom_up = net.feedback(l - 1) @ errs[l - 1]
        v = (net.eps2 + x[l]) * bottom_up
        mod = np.zeros_like(v)
        if l < net.depth:
            # Skip modulation from one level above, through the normalized
            # forward matrix of that level.
            sums = net.W[l].sum(axis=0)
            v_up = net.W[l] / np.maximum(sums, 1e-300)
            mod = mod + v_up @ x[l + 1]
        mod = mod + _attn_drive(net, states, l)
        v = v * (1.0 + net.beta * mod)
        new_x.append(v)
    out = BCDIMStates(x=new_x, attention_inputs=states.attention_inputs)
    out.e = _all_errors(net, new_x)
    return out


def bc_additive_step(net: BCDIMNetwork, states: BCDIMStates) -> BCDIMStates:
    """Additive biased-competition step (subtractive errors).

    e_l = x_l - W[l] x_{l+1};
    x_l += beta W[l-1]^T e_{l-1} + beta_m fb-skip + beta_a attention.
    """
    x = _check_x(net, states.x)
    errs = [x[l] - net.W[l] @ x[l + 1] for l in range(net.depth)]
    new_x = [x[0]]
    for l in range(1, net.depth + 1):
        v = x[l] + net.beta * (net.W[l - 1].T @ errs[l - 1])
        if net.beta_m != 0.0 and l < net.depth:
            sums = net.W[l].sum(axis=0)
            v = v + net.beta_m * ((net.W[l] / np.maximum(sums, 1e-300)) @ x[l + 1])
        if net.beta_a != 0.0:
            v = v + net.beta_a * _attn_drive(net, states, l)
        new_x.append(v)
    out = BCDIMStates(x=new_x, attention_inputs=states.attention_inputs)
    out.e = errs
    return out


def bcdim_weight_update(net: BCDIMNetwork, states: BCDIMStates, beta: float) -> list[np.ndarray]:
    """Multiplicative Hebbian deltas per level.

    dW[l] = W[l] * (beta (e_l - 1) x_{l+1}^T); the caller applies them with
    ``bcdim_apply`` which clips at zero.
    """
    x = _check_x(net, states.x)
    errs = _all_errors(net, x)
    deltas = []
    for l in range(net.depth):
        e1 = errs[l] - 1.0
        if e1.ndim == 1:
            outer = np.outer(e1, x[l + 1])
        else:
            outer = (e1 @ x[l + 1].T) / e1.shape[1]
        deltas.append(net.W[l] * (beta * outer))
    return deltas


def bcdim_apply(net: BCDIMNetwork, deltas: list[np.ndarray]) -> BCDIMNetwork:
    """W <- max(W + dW, 0): overshooting updates cannot break positivity."""
    return replace(net, W=[np.maximum(w + d, 0.0) for w, d in zip(net.W, deltas)])


def bcdim_settle(net: BCDIMNetwork, observation: np.ndarray, T: int) -> BCDIMStates:
    """Clamp a non-negative observation at layer 0, start free states at
    the eps2 floor, run T multiplicative sweeps."""
    obs = _check_nonneg("observation", observation)
    if obs.shape[0] != net.layer_dims[0]:
        raise ValueError(f"observation has leading dim {obs.shape[0]}, expected {net.layer_dims[0]}")
    if T < 0:
        raise ValueError("T must be >= 0")
    shape = lambda d: (d,) if obs.ndim == 1 else (d, obs.shape[1])
    states = BCDIMStates(x=[obs] + [np.full(shape(d), net.eps2) for d in net.layer_dims[1:]])
    for _ in range(T):
        states = bcdim_state_update(net, states)
    states.e = _all_errors(net, states.x)
    return states


def generalized_kl(target: np.ndarray, reconstruction: np.ndarray) -> float:
    """sum(t log(t / r) - t + r), with 0 log 0 taken as 0."""
    t = np.asarray(target, dtype=np.float64)
    r = np.asarray(reconstruction, dtype=np.float64)
    pos = t > 0
    val = float(np.sum(r - t))
    val += float(np.sum(t[pos] * np.log(t[pos] / np.maximum(r[pos], 1e-300))))
    return val
