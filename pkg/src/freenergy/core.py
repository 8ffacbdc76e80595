"""Hierarchical predictive coding on a stack of layers.

A network holds generative weights W[l] that predict layer l from layer
l+1: u_l = W[l] . phi(x_{l+1}). Inference ("settling") runs gradient
descent on the summed squared prediction error over the free value nodes;
learning is a local Hebbian update that descends the same energy in the
weights. Layer 0 and/or layer L can be clamped to data, which covers both
the generative orientation (observation at the bottom, free code on top)
and the discriminative one (input on top, target at the bottom).

State args accept a single vector per layer, shape (J_l,), or a batch as
columns, shape (J_l, B); batch elements settle independently and weight
updates average over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .numerics import activation_apply, activation_deriv, glorot_uniform, make_rng

SCHEDULES = ("standard", "incremental", "fixed_prediction")

# L2-style states are plain lists of float64 arrays, index 0 = bottom layer.
LayerStates = list


@dataclass
class PCNetwork:
    """Layer sizes, predictive weights, activation, optional top prior.

    weights[l] has shape (layer_dims[l], layer_dims[l+1]) and generates the
    prediction for layer l from layer l+1. With no top prior the top layer
    is a free code and carries zero error; a (mean, precision) pair adds a
    Gaussian pull ``0.5 * sum(prec * (x_L - mean)**2)`` to the energy.
    ``precisions`` optionally holds one positive diagonal per predicted
    layer (0..L-1) scaling that layer's squared-error term.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    activation: str = "tanh"
    top_prior: Optional[tuple[np.ndarray, np.ndarray]] = None
    precisions: Optional[list[np.ndarray]] = None

    def __post_init__(self) -> None:
        dims = [int(d) for d in self.layer_dims]
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError("layer_dims needs at least two positive sizes")
        self.layer_dims = dims
        if len(self.weights) != self.depth:
            raise ValueError(f"expected {self.depth} weight matrices, got {len(self.weights)}")
        ws = []
        for l, w in enumerate(self.weights):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (dims[l], dims[l + 1]):
                raise ValueError(
                    f"weights[{l}] has shape {w.shape}, expected {(dims[l], dims[l + 1])}"
                )
            if not np.all(np.isfinite(w)):
                raise ValueError(f"weights[{l}] contains non-finite entries")
            ws.append(w)
        self.weights = ws
        if self.top_prior is not None:
            mean = np.asarray(self.top_prior[0], dtype=np.float64)
            prec = np.asarray(self.top_prior[1], dtype=np.float64)
            if mean.shape != (dims[-1],) or prec.shape != (dims[-1],):
                raise ValueError("top_prior mean/precision must match the top layer size")
            if not np.all(prec > 0):
                raise ValueError("top_prior precision entries must be positive")
            self.top_prior = (mean, prec)
        if self.precisions is not None:
            ps = []
            for l, p in enumerate(self.precisions):
                p = np.asarray(p, dtype=np.float64)
                if p.shape != (dims[l],) or not np.all(p > 0):
                    raise ValueError(f"precisions[{l}] must be positive with shape ({dims[l]},)")
                ps.append(p)
            if len(ps) != self.depth:
                raise ValueError("one precision diagonal per predicted layer expected")
            self.precisions = ps

    @property
    def depth(self) -> int:
        """Number of weight matrices (layer count minus one)."""
        return len(self.layer_dims) - 1

    @classmethod
    def random(
        cls,
        layer_dims: Sequence[int],
        activation: str,
        rng: np.random.Generator,
        top_prior: Optional[tuple[np.ndarray, np.ndarray]] = None,
    ) -> "PCNetwork":
        dims = list(layer_dims)
        weights = [glorot_uniform(rng, dims[l], dims[l + 1]) for l in range(len(dims) - 1)]
        return cls(dims, weights, activation, top_prior)


@dataclass
class ClampSpec:
    """Observed values held fixed during settling.

    ``bottom`` clamps layer 0, ``top`` clamps layer L; both may be batched
    as columns. Training requires at least one of the two.
    """

    bottom: Optional[np.ndarray] = None
    top: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.bottom is not None:
            self.bottom = np.asarray(self.bottom, dtype=np.float64)
        if self.top is not None:
            self.top = np.asarray(self.top, dtype=np.float64)


@dataclass
class InferenceConfig:
    """Settling and learning hyperparameters.

    gamma: state step size; iterations: settling budget T; tol: relative
    energy-change stopping threshold; backtracking: halve a step that
    raises the energy (floor 2**-20 * gamma) so traces never increase;
    alpha: weight step size; schedule: standard / incremental /
    fixed_prediction.
    """

    gamma: float = 0.1
    iterations: int = 100
    tol: float = 1e-8
    backtracking: bool = False
    alpha: float = 0.01
    schedule: str = "standard"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be finite and positive")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be finite and positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")


def _check_states(net: PCNetwork, states: LayerStates) -> LayerStates:
    if len(states) != net.depth + 1:
        raise ValueError(f"expected {net.depth + 1} state vectors, got {len(states)}")
    out = []
    width = None
    for l, x in enumerate(states):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != net.layer_dims[l] or x.ndim > 2:
            raise ValueError(
                f"states[{l}] has shape {x.shape}, expected leading dim {net.layer_dims[l]}"
            )
        b = x.shape[1] if x.ndim == 2 else None
        if width is None:
            width = b
        elif b != width:
            raise ValueError("inconsistent batch widths across layers")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"states[{l}] contains non-finite values")
        out.append(x)
    return out


def predict(net: PCNetwork, states: LayerStates) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Top-down predictions u_0..u_{L-1} and raw errors e_0..e_L.

    e_l = x_l - u_l for predicted layers. The top error is x_L minus the
    prior mean when a top prior is configured, else zero (free code).
    """
    states = _check_states(net, states)
    preds = []
    errors = []
    for l in range(net.depth):
        u = net.weights[l] @ activation_apply(net.activation, states[l + 1])
        preds.append(u)
        errors.append(states[l] - u)
    x_top = states[-1]
    if net.top_prior is not None:
        mean = net.top_prior[0] if x_top.ndim == 1 else net.top_prior[0][:, None]
        errors.append(x_top - mean)
    else:
        errors.append(np.zeros_like(x_top))
    return preds, errors


def _weighted_errors(net: PCNetwork, errors: list[np.ndarray]) -> list[np.ndarray]:
    # Precision-scaled errors drive both the energy and the dynamics.
    out = []
    for l in range(net.depth):
        e = errors[l]
        if net.precisions is not None:
            p = net.precisions[l] if e.ndim == 1 else net.precisions[l][:, None]
            e = e * p
        out.append(e)
    e_top = errors[-1]
    if net.top_prior is not None:
        p = net.top_prior[1] if e_top.ndim == 1 else net.top_prior[1][:, None]
        e_top = e_top * p
    out.append(e_top)
    return out


def _energy_from(errors: list[np.ndarray], weighted: list[np.ndarray]) -> float:
    return 0.5 * float(sum(np.sum(e * w) for e, w in zip(errors, weighted)))


def energy(net: PCNetwork, states: LayerStates) -> float:
    """Half the (precision-weighted) sum of squared prediction errors."""
    _, errors = predict(net, states)
    return _energy_from(errors, _weighted_errors(net, errors))


def _clamped_mask(net: PCNetwork, clamp: ClampSpec) -> list[bool]:
    mask = [False] * (net.depth + 1)
    mask[0] = clamp.bottom is not None
    mask[-1] = clamp.top is not None
    return mask


def _state_step(
    net: PCNetwork,
    states: LayerStates,
    weighted: list[np.ndarray],
    clamp: ClampSpec,
    gamma: float,
    frozen_derivs: Optional[list[Optional[np.ndarray]]] = None,
) -> LayerStates:
    # One descent step on the free layers; exactly -gamma * dE/dx per layer.
    clamped = _clamped_mask(net, clamp)
    out = []
    for l in range(net.depth + 1):
        if clamped[l]:
            out.append(states[l])
            continue
        grad = weighted[l].copy()
        if l >= 1:
            if frozen_derivs is not None and frozen_derivs[l] is not None:
                d = frozen_derivs[l]
            else:
                d = activation_deriv(net.activation, states[l])
            grad -= d * (net.weights[l - 1].T @ weighted[l - 1])
        out.append(states[l] - gamma * grad)
    return out


def infer_step(net: PCNetwork, states: LayerStates, clamp: ClampSpec, gamma: float) -> LayerStates:
    """One value-node update at step size gamma; clamped layers untouched.

    gamma = 0 is accepted and returns the states unchanged.
    """
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError("gamma must be finite and >= 0")
    states = _check_states(net, states)
    _, errors = predict(net, states)
    return _state_step(net, states, _weighted_errors(net, errors), clamp, gamma)


def _states_equal(a: LayerStates, b: LayerStates) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def settle(
    net: PCNetwork, init: LayerStates, clamp: ClampSpec, cfg: InferenceConfig
) -> tuple[LayerStates, list[float]]:
    """Iterate infer_step until the energy stalls or the budget runs out.

    Returns the settled states and the energy trace (starting at the
    initial energy). Stops early when the relative energy change drops
    below cfg.tol or the states reach an exact fixed point. With
    backtracking the trace is non-increasing: a step that raises the
    energy is retried at half the size down to 2**-20 * gamma, and the
    loop stops if no improving step exists.
    """
    states = _check_states(net, init)
    _, errors = predict(net, states)
    weighted = _weighted_errors(net, errors)
    e_cur = _energy_from(errors, weighted)
    trace = [e_cur]
    floor = cfg.gamma * 2.0**-20
    for _ in range(cfg.iterations):
        gamma = cfg.gamma
        candidate = _state_step(net, states, weighted, clamp, gamma)
        _, c_err = predict(net, candidate)
        c_weighted = _weighted_errors(net, c_err)
        e_new = _energy_from(c_err, c_weighted)
        if cfg.backtracking:
            while e_new > e_cur and gamma > floor:
                gamma *= 0.5
                candidate = _state_step(net, states, weighted, clamp, gamma)
                _, c_err = predict(net, candidate)
                c_weighted = _weighted_errors(net, c_err)
                e_new = _energy_from(c_err, c_weighted)
            if e_new > e_cur:
                break  # no improving step even at the floor
        if _states_equal(candidate, states):
            break  # exact fixed point
        states, weighted = candidate, c_weighted
        e_prev, e_cur = e_cur, e_new
        trace.append(e_cur)
        if abs(e_cur - e_prev) / max(e_prev, 1e-12) < cfg.tol:
            break
    return states, trace


def weight_update(net: PCNetwork, states: LayerStates, alpha: float) -> list[np.ndarray]:
    """Hebbian deltas dW[l] = alpha * e_l . phi(x_{l+1})^T; batch-averaged.

    Equals -alpha * dE/dW[l] for the current states.
    """
    if not (np.isfinite(alpha) and alpha > 0):
        raise ValueError("alpha must be finite and positive")
    states = _check_states(net, states)
    _, errors = predict(net, states)
    weighted = _weighted_errors(net, errors)
    return _weight_deltas(net, states, weighted, alpha)


def _weight_deltas(
    net: PCNetwork,
    states: LayerStates,
    weighted: list[np.ndarray],
    alpha: float,
    frozen_pre: Optional[list[Optional[np.ndarray]]] = None,
) -> list[np.ndarray]:
    deltas = []
    for l in range(net.depth):
        if frozen_pre is not None and frozen_pre[l + 1] is not None:
            pre = frozen_pre[l + 1]
        else:
            pre = activation_apply(net.activation, states[l + 1])
        e = weighted[l]
        if e.ndim == 1:
            deltas.append(alpha * np.outer(e, pre))
        else:
            deltas.append(alpha * (e @ pre.T) / e.shape[1])
    return deltas


def _apply_deltas(net: PCNetwork, deltas: list[np.ndarray]) -> PCNetwork:
    return replace(net, weights=[w + d for w, d in zip(net.weights, deltas)])


def feedforward(net: PCNetwork, source: np.ndarray) -> np.ndarray:
    """Pure top-down sweep: set x_L = source, propagate predictions down.

    Serves both generation from a code and the test-time pass of the
    discriminative orientation.
    """
    x = np.asarray(source, dtype=np.float64)
    if x.shape[0] != net.layer_dims[-1]:
        raise ValueError(f"source has leading dim {x.shape[0]}, expected {net.layer_dims[-1]}")
    for l in range(net.depth - 1, -1, -1):
        x = net.weights[l] @ activation_apply(net.activation, x)
    return x


def init_states(
    net: PCNetwork, clamp: ClampSpec, rng: Optional[np.random.Generator] = None
) -> LayerStates:
    """Feedforward state initialization from the clamped end.

    With a top clamp the sweep starts there; otherwise the top code is
    drawn from N(0, 0.05^2) and swept down. The bottom clamp, if present,
    overwrites layer 0 afterwards.
    """
    if clamp.bottom is None and clamp.top is None:
        raise ValueError("at least one clamp must be present")
    batch = None
    for v in (clamp.bottom, clamp.top):
        if v is not None and v.ndim == 2:
            batch = v.shape[1]
    if clamp.top is not None:
        top = clamp.top
    else:
        if rng is None:
            rng = make_rng(0)
        shape = (net.layer_dims[-1],) if batch is None else (net.layer_dims[-1], batch)
        top = rng.normal(0.0, 0.05, size=shape)
    states = [None] * (net.depth + 1)
    states[-1] = np.asarray(top, dtype=np.float64)
    for l in range(net.depth - 1, -1, -1):
        states[l] = net.weights[l] @ activation_apply(net.activation, states[l + 1])
    if clamp.bottom is not None:
        states[0] = clamp.bottom
    return _check_states(net, states)


def infer_code(
    net: PCNetwork,
    observation: np.ndarray,
    cfg: InferenceConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Clamp the observation at the bottom, settle, return the top code."""
    clamp = ClampSpec(bottom=observation)
    states = init_states(net, clamp, rng)
    settled, _ = settle(net, states, clamp, cfg)
    return settled[-1]


def _batch_width(clamp: ClampSpec) -> int:
    for v in (clamp.bottom, clamp.top):
        if v is not None:
            return v.shape[1] if v.ndim == 2 else 1
    raise ValueError("empty batch: no clamped values supplied")


def _settle_fixed_prediction(
    net: PCNetwork, states0: LayerStates, clamp: ClampSpec, cfg: InferenceConfig
) -> tuple[LayerStates, list[np.ndarray], list[Optional[np.ndarray]], list[float]]:
    # Freeze the local linearization at the feedforward point: predictions,
    # activation slopes, and presynaptic activities all stay at their sweep
    # values while the errors relax. The equilibrium errors then satisfy the
    # exact chain-rule recursion of the matched feedforward net.
    preds0, errors0 = predict(net, states0)
    derivs: list[Optional[np.ndarray]] = [None] * (net.depth + 1)
    pre: list[Optional[np.ndarray]] = [None] * (net.depth + 1)
    for l in range(1, net.depth + 1):
        derivs[l] = activation_deriv(net.activation, states0[l])
        pre[l] = activation_apply(net.activation, states0[l])
    states = states0
    errors = errors0
    weighted = _weighted_errors(net, errors)
    e_cur = _energy_from(errors, weighted)
    trace = [e_cur]
    for _ in range(cfg.iterations):
        candidate = _state_step(net, states, weighted, clamp, cfg.gamma, frozen_derivs=derivs)
        if _states_equal(candidate, states):
            break
        errors = [x - u for x, u in zip(candidate, preds0)]
        if net.top_prior is None:
            errors.append(np.zeros_like(candidate[-1]))
        else:
            mean = net.top_prior[0] if candidate[-1].ndim == 1 else net.top_prior[0][:, None]
            errors.append(candidate[-1] - mean)
        states = candidate
        weighted = _weighted_errors(net, errors)
        e_prev, e_cur = e_cur, _energy_from(errors, weighted)
        trace.append(e_cur)
        if abs(e_cur - e_prev) / max(e_prev, 1e-12) < cfg.tol:
            break
    return states, weighted, pre, trace


def train_step(
    net: PCNetwork,
    clamp: ClampSpec,
    cfg: InferenceConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[PCNetwork, dict]:
    """One training step on a (possibly batched) clamped example.

    standard: settle, then a single batch-averaged weight update from the
    equilibrium errors. incremental: interleave a weight step with every
    state step. fixed_prediction: feedforward init, predictions frozen at
    their sweep values, settle, then update using the frozen presynaptic
    activities.
    """
    if clamp.bottom is None and clamp.top is None:
        raise ValueError("training requires at least one clamped layer")
    _batch_width(clamp)

    if cfg.schedule == "standard":
        states = init_states(net, clamp, rng)
        settled, trace = settle(net, states, clamp, cfg)
        deltas = weight_update(net, settled, cfg.alpha)
        new_net = _apply_deltas(net, deltas)
        return new_net, {"energy": trace[-1], "iterations": len(trace) - 1}

    if cfg.schedule == "incremental":
        states = init_states(net, clamp, rng)
        cur = net
        e_cur = energy(cur, states)
        for t in range(cfg.iterations):
            # State and weight steps share one forward pass, applied side
            # by side instead of waiting for settling to finish.
            _, errors = predict(cur, states)
            weighted = _weighted_errors(cur, errors)
            deltas = _weight_deltas(cur, states, weighted, cfg.alpha)
            states = _state_step(cur, states, weighted, clamp, cfg.gamma)
            cur = _apply_deltas(cur, deltas)
            e_prev, e_cur = e_cur, energy(cur, states)
            if abs(e_cur - e_prev) / max(e_prev, 1e-12) < cfg.tol:
                break
        return cur, {"energy": e_cur, "iterations": t + 1}

    # fixed_prediction
    states0 = init_states(net, clamp, rng)
    settled, weighted, pre, trace = _settle_fixed_prediction(net, states0, clamp, cfg)
    deltas = _weight_deltas(net, settled, weighted, cfg.alpha, frozen_pre=pre)
    new_net = _apply_deltas(net, deltas)
    return new_net, {"energy": trace[-1], "iterations": len(trace) - 1}
