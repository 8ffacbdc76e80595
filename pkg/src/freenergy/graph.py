"""Predictive coding on an arbitrary directed graph of n neurons.

Every neuron both predicts and is predicted: u_i = sum_j W[j, i] phi(x_j),
with W masked by a binary adjacency matrix (row = presynaptic source,
column = postsynaptic target). A layered mask recovers the hierarchical
stack exactly; a dense mask turns the model into an associative memory
that stores patterns by Hebbian updates on fully clamped states and
retrieves them by settling the unknown coordinates of a cue.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import InferenceConfig, PCNetwork
from .numerics import activation_apply, activation_deriv, make_rng


@dataclass
class PCGraph:
    """n-neuron recurrent model; masked weight entries stay exactly zero."""

    n: int
    weights: np.ndarray
    mask: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mask = np.asarray(self.mask)
        if self.mask.shape != (self.n, self.n) or self.weights.shape != (self.n, self.n):
            raise ValueError(f"weights and mask must be {self.n}x{self.n}")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        self.mask = self.mask.astype(np.float64)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite entries")
        # Enforce the invariant on construction; every update re-masks.
        self.weights = self.weights * self.mask

    @classmethod
    def random(
        cls, mask: np.ndarray, rng: np.random.Generator, scale: float = 0.1,
        activation: str = "identity",
    ) -> "PCGraph":
        n = mask.shape[0]
        w = rng.uniform(-scale, scale, size=(n, n))
        return cls(n, w, mask, activation)


@dataclass
class GraphClamp:
    """Per-neuron clamping: hold ``values[i]`` fixed wherever ``clamped[i]``."""

    clamped: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.clamped = np.asarray(self.clamped, dtype=bool)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.clamped.shape != self.values.shape:
            raise ValueError("clamped and values must have the same length")


def _check_state(g: PCGraph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({g.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite values")
    return x


def graph_predict(g: PCGraph, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictions gathered over incoming edges, and errors e = x - u.

    Neurons with no incoming edge are predicted to be zero, so their error
    is their own activity.
    """
    x = _check_state(g, x)
    m = g.weights * g.mask
    u = m.T @ activation_apply(g.activation, x)
    return u, x - u


def graph_energy(g: PCGraph, x: np.ndarray) -> float:
    """Half the summed squared prediction error over all neurons."""
    _, e = graph_predict(g, x)
    return 0.5 * float(np.sum(e * e))


def graph_infer_step(g: PCGraph, x: np.ndarray, clamp: GraphClamp, gamma: float) -> np.ndarray:
    """One descent step -gamma * dE/dx on the unclamped neurons."""
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError("gamma must be finite and >= 0")
    x = _check_state(g, x)
    _, e = graph_predict(g, x)
    m = g.weights * g.mask
    grad = e - activation_deriv(g.activation, x) * (m @ e)
    out = x - gamma * grad
    out[clamp.clamped] = x[clamp.clamped]
    return out


def graph_settle(
    g: PCGraph, init: np.ndarray, clamp: GraphClamp, cfg: InferenceConfig
) -> tuple[np.ndarray, list[float]]:
    """Iterate graph_infer_step with the same stopping and backtracking
    rules as the layered stack; returns (state, energy trace)."""
    x = _check_state(g, init)
    x = x.copy()
    x[clamp.clamped] = clamp.values[clamp.clamped]
    e_cur = graph_energy(g, x)
    trace = [e_cur]
    floor = cfg.gamma * 2.0**-20
    for _ in range(cfg.iterations):
        gamma = cfg.gamma
        candidate = graph_infer_step(g, x, clamp, gamma)
        e_new = graph_energy(g, candidate)
        if cfg.backtracking:
            while e_new > e_cur and gamma > floor:
                gamma *= 0.5
                candidate = graph_infer_step(g, x, clamp, gamma)
                e_new = graph_energy(g, candidate)
            if e_new > e_cur:
                break
        if np.array_equal(candidate, x):
            break
        x = candidate
        e_prev, e_cur = e_cur, e_new
        trace.append(e_cur)
        if abs(e_cur - e_prev) / max(e_prev, 1e-12) < cfg.tol:
            break
    return x, trace


def graph_weight_update(g: PCGraph, x: np.ndarray, alpha: float) -> np.ndarray:
    """Masked Hebbian deltas: dW[j, i] = alpha * e_i * phi(x_j) on active edges."""
    if not (np.isfinite(alpha) and alpha > 0):
        raise ValueError("alpha must be finite and positive")
    x = _check_state(g, x)
    _, e = graph_predict(g, x)
    return alpha * np.outer(activation_apply(g.activation, x), e) * g.mask


def memory_store(
    g: PCGraph, patterns: Sequence[np.ndarray], cfg: InferenceConfig, epochs: int
) -> PCGraph:
    """Hebbian storage with every neuron clamped to the pattern.

    Sweeps the pattern list ``epochs`` times. With cfg.backtracking the
    per-sweep step size is halved whenever a sweep fails to lower the
    total storage energy, so the energy is non-increasing across epochs.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    pats = [ _check_state(g, p) for p in patterns ]
    if not pats:
        raise ValueError("no patterns to store")

    def total_energy(graph: PCGraph) -> float:
        return sum(graph_energy(graph, p) for p in pats)

    def sweep(weights: np.ndarray, step: float) -> np.ndarray:
        w = weights.copy()
        for p in pats:
            phi_p = activation_apply(g.activation, p)
            e = p - w.T @ phi_p
            w = (w + step * np.outer(phi_p, e)) * g.mask
        return w

    cur = g
    alpha = cfg.alpha
    floor = cfg.alpha * 2.0**-20
    e_cur = total_energy(cur)
    for _ in range(epochs):
        while True:
            candidate = replace(cur, weights=sweep(cur.weights, alpha))
            e_new = total_energy(candidate)
            if not cfg.backtracking or e_new <= e_cur or alpha <= floor:
                break
            alpha *= 0.5
        if cfg.backtracking and e_new > e_cur:
            break  # even the floor step raises the energy; keep what we have
        cur, e_cur = candidate, e_new
    return cur


def memory_retrieve(
    g: PCGraph, cue: np.ndarray, known: np.ndarray, cfg: InferenceConfig
) -> np.ndarray:
    """Complete a partial cue: clamp the trusted coordinates, settle the rest.

    Unknown coordinates start at zero.
    """
    cue = _check_state(g, cue)
    known = np.asarray(known, dtype=bool)
    if known.shape != (g.n,):
        raise ValueError(f"known mask has shape {known.shape}, expected ({g.n},)")
    x = np.where(known, cue, 0.0)
    settled, _ = graph_settle(g, x, GraphClamp(known, cue), cfg)
    return settled


# ---------------------------------------------------------------------------
# Mask builders and conversion from a layered stack
# ---------------------------------------------------------------------------

def dense_mask(n: int) -> np.ndarray:
    """All edges except self-loops."""
    return np.ones((n, n)) - np.eye(n)


def layered_mask(layer_dims: Sequence[int]) -> np.ndarray:
    """Edges from every neuron of layer l+1 to every neuron of layer l,
    with layer blocks laid out bottom-up."""
    n = int(sum(layer_dims))
    mask = np.zeros((n, n))
    offsets = np.cumsum([0] + list(layer_dims))
    for l in range(len(layer_dims) - 1):
        lo, hi = offsets[l], offsets[l + 1]
        src_lo, src_hi = offsets[l + 1], offsets[l + 2]
        mask[src_lo:src_hi, lo:hi] = 1.0
    return mask


def bipartite_mask(n_left: int, n_right: int) -> np.ndarray:
    """Complete bipartite wiring in both directions, no within-group edges."""
    n = n_left + n_right
    mask = np.zeros((n, n))
    mask[:n_left, n_left:] = 1.0
    mask[n_left:, :n_left] = 1.0
    return mask


def erdos_renyi_mask(n: int, p: float, seed: int) -> np.ndarray:
    """Each ordered pair (i != j) is an edge independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    rng = make_rng(seed)
    mask = (rng.random((n, n)) < p).astype(np.float64)
    np.fill_diagonal(mask, 0.0)
    return mask


def from_network(net: PCNetwork) -> PCGraph:
    """Embed a layered stack as a graph with identical energy and dynamics.

    Sourceless (top-layer) neurons are predicted to be zero here, so the
    embedding matches a stack whose top prior is zero-mean with unit
    precision.
    """
    dims = net.layer_dims
    mask = layered_mask(dims)
    n = int(sum(dims))
    w = np.zeros((n, n))
    offsets = np.cumsum([0] + list(dims))
    for l in range(net.depth):
        lo, hi = offsets[l], offsets[l + 1]
        src_lo, src_hi = offsets[l + 1], offsets[l + 2]
        # graph convention: W[source, target]
        w[src_lo:src_hi, lo:hi] = net.weights[l].T
    return PCGraph(n, w, mask, net.activation)


def pack_states(net: PCNetwork, states: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate per-layer state vectors into one graph state vector."""
    return np.concatenate([np.asarray(s, dtype=np.float64) for s in states])


def unpack_states(net: PCNetwork, x: np.ndarray) -> list[np.ndarray]:
    """Split a graph state vector back into per-layer vectors."""
    out = []
    offset = 0
    for d in net.layer_dims:
        out.append(np.asarray(x[offset : offset + d], dtype=np.float64))
        offset += d
    return out


# ---------------------------------------------------------------------------
# Mask exchange format: header line "n", then n rows of 0/1
# ---------------------------------------------------------------------------

def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    n = mask.shape[0]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{n}\n")
        for row in mask.astype(int):
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_mask(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty mask file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValueError(f"{path}: bad header line {lines[0]!r}") from exc
    if len(lines) != n + 1:
        raise ValueError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != n or any(v not in ("0", "1") for v in vals):
            raise ValueError(f"{path}: row {i} is not {n} space-separated 0/1 entries")
        rows.append([float(v) for v in vals])
    return np.asarray(rows)
