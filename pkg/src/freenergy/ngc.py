"""Neural generative coding circuits.

Compared to the symmetric stack, these circuits carry separate error
feedback synapses E (no weight transport), an activity leak, an optional
dampening function in place of the activation derivative, optional
lateral cross-inhibition/self-excitation synapses, optional skip
connections one extra level down, and diagonal precision weighting of the
error units. Learning is multi-factor Hebbian with optional column-sum
synaptic scaling, plus a projection step that bounds column norms.

Conventions: W[l] predicts layer l from layer l+1 with shape
(J_l, J_{l+1}); E[l] feeds the layer-l error up into layer l+1 with shape
(J_{l+1}, J_l). The topmost layer is unpredicted (its error is zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .numerics import activation_apply, activation_deriv, glorot_uniform

DAMPENING = ("ones", "phi_prime")


@dataclass
class NGCCircuit:
    layer_dims: list[int]
    W: list[np.ndarray]
    E: list[np.ndarray]
    skip: Optional[list[Optional[np.ndarray]]] = None  # skip[l] predicts layer l from l+2
    lateral: Optional[list[Optional[np.ndarray]]] = None  # lateral[l] acts within layer l
    sigma: Optional[list[np.ndarray]] = None  # diagonal of the error covariance per predicted layer
    g_kind: str = "identity"
    phi_kind: str = "identity"
    dampening: str = "ones"
    leak: float = 0.0
    beta: float = 0.1
    gamma_e: float = 0.9
    alpha_m: float = 0.0
    scaling: bool = False

    def __post_init__(self) -> None:
        dims = [int(d) for d in self.layer_dims]
        self.layer_dims = dims
        L = len(dims) - 1
        if len(self.W) != L or len(self.E) != L:
            raise ValueError(f"expected {L} W and E matrices")
        for l in range(L):
            self.W[l] = np.asarray(self.W[l], dtype=np.float64)
            self.E[l] = np.asarray(self.E[l], dtype=np.float64)
            if self.W[l].shape != (dims[l], dims[l + 1]):
                raise ValueError(f"W[{l}] has shape {self.W[l].shape}, expected {(dims[l], dims[l+1])}")
            if self.E[l].shape != (dims[l + 1], dims[l]):
                raise ValueError(f"E[{l}] has shape {self.E[l].shape}, expected {(dims[l+1], dims[l])}")
        if self.skip is not None:
            for l, m in enumerate(self.skip):
                if m is None:
                    continue
                m = np.asarray(m, dtype=np.float64)
                if l + 2 > L or m.shape != (dims[l], dims[l + 2]):
                    raise ValueError(f"skip[{l}] must map layer {l+2} to layer {l}")
                self.skip[l] = m
        if self.lateral is not None:
            for l, v in enumerate(self.lateral):
                if v is None:
                    continue
                v = np.asarray(v, dtype=np.float64)
                if v.shape != (dims[l], dims[l]):
                    raise ValueError(f"lateral[{l}] must be square of size {dims[l]}")
                self.lateral[l] = v
        if self.sigma is None:
            self.sigma = [np.ones(dims[l]) for l in range(L)]
        for l, s in enumerate(self.sigma):
            s = np.asarray(s, dtype=np.float64)
            if s.shape != (self.layer_dims[l],) or not np.all(s > 0):
                raise ValueError(f"sigma[{l}] must be strictly positive with shape ({dims[l]},)")
            self.sigma[l] = s
        if self.dampening not in DAMPENING:
            raise ValueError(f"unknown dampening {self.dampening!r}; choose from {DAMPENING}")
        if self.leak < 0:
            raise ValueError("leak must be >= 0")
        # beta = 0 is the degenerate zero-step circuit, accepted for tests
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not 0 < self.gamma_e <= 1:
            raise ValueError("gamma_e must lie in (0, 1]")

    @property
    def depth(self) -> int:
        return len(self.layer_dims) - 1

    @classmethod
    def random(
        cls, layer_dims: Sequence[int], rng: np.random.Generator, **kwargs
    ) -> "NGCCircuit":
        dims = list(layer_dims)
        W = [glorot_uniform(rng, dims[l], dims[l + 1]) for l in range(len(dims) - 1)]
        E = [glorot_uniform(rng, dims[l + 1], dims[l]) for l in range(len(dims) - 1)]
        return cls(dims, W, E, **kwargs)


@dataclass
class NGCStates:
    """Value vectors plus the derived predictions and error units."""

    x: list[np.ndarray]
    xbar: list[np.ndarray] = field(default_factory=list)
    e: list[np.ndarray] = field(default_factory=list)


def _check_x(c: NGCCircuit, x: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(x) != c.depth + 1:
        raise ValueError(f"expected {c.depth + 1} state vectors, got {len(x)}")
    out = []
    for l, v in enumerate(x):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != c.layer_dims[l]:
            raise ValueError(f"state {l} has leading dim {v.shape[0]}, expected {c.layer_dims[l]}")
        out.append(v)
    return out


def ngc_predict(c: NGCCircuit, s: NGCStates) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Local predictions xbar_0..xbar_{L-1} and precision-weighted errors.

    xbar_l = g(W[l] phi(x_{l+1}) + alpha_m * skip[l] phi(x_{l+2})), and
    e_l = (x_l - xbar_l) / sigma_l.
    """
    x = _check_x(c, s.x)
    xbar = []
    errs = []
    for l in range(c.depth):
        drive = c.W[l] @ activation_apply(c.phi_kind, x[l + 1])
        if c.skip is not None and l < len(c.skip) and c.skip[l] is not None:
            drive = drive + c.alpha_m * (c.skip[l] @ activation_apply(c.phi_kind, x[l + 2]))
        xb = activation_apply(c.g_kind, drive)
        xbar.append(xb)
        sig = c.sigma[l] if x[l].ndim == 1 else c.sigma[l][:, None]
        errs.append((x[l] - xb) / sig)
    s.xbar = xbar
    s.e = errs
    return xbar, errs


def _damp(c: NGCCircuit, v: np.ndarray) -> np.ndarray:
    if c.dampening == "phi_prime":
        return activation_deriv(c.phi_kind, v)
    return np.ones_like(v)


def _lateral_term(c: NGCCircuit, l: int, v: np.ndarray) -> np.ndarray:
    # Cross-inhibition from peers, self-excitation from the diagonal.
    V = c.lateral[l] if c.lateral is not None and l < len(c.lateral) else None
    if V is None:
        return np.zeros_like(v)
    phi_v = activation_apply(c.phi_kind, v)
    diag = np.diag(V)
    off = V - np.diag(diag)
    d = diag if v.ndim == 1 else diag[:, None]
    return -(off @ phi_v) + d * phi_v


def ngc_state_update(c: NGCCircuit, s: NGCStates) -> NGCStates:
    """One Euler step of the neural dynamics; layer 0 stays clamped.

    x_l += beta * (-leak * x_l - e_l + (E[l-1] e_{l-1}) * f_D(x_l) + lateral),
    with the top error fixed at zero.
    """
    x = _check_x(c, s.x)
    _, errs = ngc_predict(c, NGCStates(x=x))
    new_x = [x[0]]
    for l in range(1, c.depth + 1):
        e_l = errs[l] if l < c.depth else np.zeros_like(x[l])
        drive = -c.leak * x[l] - e_l
        drive = drive + (c.E[l - 1] @ errs[l - 1]) * _damp(c, x[l])
        drive = drive + _lateral_term(c, l, x[l])
        new_x.append(x[l] + c.beta * drive)
    out = NGCStates(x=new_x)
    ngc_predict(c, out)
    return out


def ngc_settle(c: NGCCircuit, observation: np.ndarray, T: int) -> NGCStates:
    """Clamp the observation at layer 0, start free layers at zero, run
    T state updates."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.shape[0] != c.layer_dims[0]:
        raise ValueError(f"observation has leading dim {obs.shape[0]}, expected {c.layer_dims[0]}")
    if T < 0:
        raise ValueError("T must be >= 0")
    shape = lambda d: (d,) if obs.ndim == 1 else (d, obs.shape[1])
    states = NGCStates(x=[obs] + [np.zeros(shape(d)) for d in c.layer_dims[1:]])
    for _ in range(T):
        states = ngc_state_update(c, states)
    ngc_predict(c, states)
    return states


def _modulation(m: np.ndarray) -> np.ndarray:
    # Column-sum synaptic scaling; absolute strengths keep the factors in
    # (0, 1] for signed synapses.
    sums = np.abs(m).sum(axis=0)
    top = sums.max()
    if top <= 0:
        return np.ones_like(m)
    return np.minimum(2.0 * sums / top, 1.0) * np.ones((m.shape[0], 1))


def ngc_hebbian_update(
    c: NGCCircuit, s: NGCStates
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Multi-factor Hebbian deltas for the generative and feedback synapses.

    dW[l] = e_l phi(x_{l+1})^T and dE[l] = gamma_e phi(x_{l+1}) e_l^T,
    each gated by its synaptic-scaling matrix when scaling is on.
    Batch-averaged when states carry columns.
    """
    x = _check_x(c, s.x)
    _, errs = ngc_predict(c, NGCStates(x=x))
    dW = []
    dE = []
    for l in range(c.depth):
        pre = activation_apply(c.phi_kind, x[l + 1])
        e = errs[l]
        if e.ndim == 1:
            dw = np.outer(e, pre)
        else:
            dw = (e @ pre.T) / e.shape[1]
        de = c.gamma_e * dw.T
        if c.scaling:
            dw = dw * _modulation(c.W[l])
            de = de * _modulation(c.E[l])
        dW.append(dw)
        dE.append(de)
    return dW, dE


def ngc_apply(c: NGCCircuit, dW: list[np.ndarray], dE: list[np.ndarray], lr: float) -> NGCCircuit:
    """Add the Hebbian deltas at rate lr."""
    return replace(
        c,
        W=[w + lr * d for w, d in zip(c.W, dW)],
        E=[e + lr * d for e, d in zip(c.E, dE)],
    )


def ngc_normalize(c: NGCCircuit) -> NGCCircuit:
    """Project every W and E column with norm above 1 back onto the unit
    ball; feasible columns are untouched.

    Columns within one part in 1e12 of unit norm count as feasible, so a
    just-projected column is not rescaled again and the projection is
    exactly idempotent in floating point.
    """

    def proj(m: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(m, axis=0)
        scale = np.where(norms > 1.0 + 1e-12, 1.0 / np.maximum(norms, 1e-300), 1.0)
        return m * scale

    return replace(c, W=[proj(w) for w in c.W], E=[proj(e) for e in c.E])


def ngc_project(c: NGCCircuit, code: np.ndarray) -> np.ndarray:
    """Ancestral projection: one top-down sweep from a top-layer code,
    skip pathways excluded. No settling."""
    x = np.asarray(code, dtype=np.float64)
    if x.shape[0] != c.layer_dims[-1]:
        raise ValueError(f"code has leading dim {x.shape[0]}, expected {c.layer_dims[-1]}")
    for l in range(c.depth - 1, -1, -1):
        x = activation_apply(c.g_kind, c.W[l] @ activation_apply(c.phi_kind, x))
    return x
