"""Central finite-difference utilities for verifying hand-written gradients."""

import numpy as np


def numerical_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-6):
    """Max elementwise relative error with a floor on the denominator.

    The floor stops near-zero entries from inflating the ratio; both arrays
    near zero compare as equal.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_grad(f, x, analytic, eps=1e-5, floor=1e-6):
    """Relative error between analytic and the central-difference gradient."""
    return max_rel_error(analytic, numerical_grad(f, x, eps=eps), floor=floor)
