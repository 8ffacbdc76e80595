"""Shared math substrate: activation functions, seeded RNG, finite-difference oracle.

Everything here is pure and in 64-bit floats; the gradient-identity checks
used throughout the test suites need tolerances tighter than 32-bit noise.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

ACTIVATION_KINDS = ("identity", "relu", "tanh", "sigmoid")


def _check_finite(name: str, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _check_kind(kind: str) -> None:
    if kind not in ACTIVATION_KINDS:
        raise ValueError(f"unknown activation kind {kind!r}; choose from {ACTIVATION_KINDS}")


def activation_apply(kind: str, v: np.ndarray) -> np.ndarray:
    """Apply the activation elementwise. Input must be finite."""
    _check_kind(kind)
    v = _check_finite("activation input", v)
    if kind == "identity":
        return v.copy()
    if kind == "relu":
        return np.maximum(v, 0.0)
    if kind == "tanh":
        return np.tanh(v)
    # numerically stable logistic
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def activation_deriv(kind: str, v: np.ndarray) -> np.ndarray:
    """Elementwise derivative of the activation.

    The relu derivative at exactly 0 is fixed to 0 so that runs are
    deterministic regardless of how states land on the kink.
    """
    _check_kind(kind)
    v = _check_finite("activation input", v)
    if kind == "identity":
        return np.ones_like(v)
    if kind == "relu":
        return np.where(v > 0.0, 1.0, 0.0)
    if kind == "tanh":
        t = np.tanh(v)
        return 1.0 - t * t
    s = activation_apply("sigmoid", v)
    return s * (1.0 - s)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based generator; equal seeds give equal streams."""
    return np.random.default_rng(np.uint64(seed))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """Weight matrix drawn uniformly from +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Used as the independent oracle for every analytic gradient in the
    package; it never calls into the code paths it checks.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    x = _check_finite("finite_diff_grad point", x).ravel().copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        xi = x[i]
        x[i] = xi + h
        fp = float(f(x))
        x[i] = xi - h
        fm = float(f(x))
        x[i] = xi
        if np.isnan(fp) or np.isnan(fm):
            raise ValueError(f"objective returned NaN near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad
