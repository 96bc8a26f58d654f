"""Small numerically-careful primitives shared across modules.

Everything operates on float64 arrays; training and the gradient checks
rely on 64-bit precision throughout.
"""

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    # log(1 + e^x) without overflow for large |x|
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inverse(y):
    # x such that softplus(x) = y; y must be positive
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def relu(x):
    return np.maximum(x, 0.0)


def require_finite(name, *arrays):
    """Raise ValueError if any array contains NaN or Inf."""
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}: non-finite values in input")
