"""Finite-difference gradient verification.

Central differences at 64-bit precision; the comparison metric is
``|g_analytic - g_numeric| / max(|g_numeric|, floor)`` reduced by max over
all elements. Used by the test suite to verify every layer's backward pass
against the forward pass alone.
"""

from __future__ import annotations

import numpy as np

__all__ = ["central_difference", "max_relative_error"]


def central_difference(f, x: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    """Gradient of scalar-valued ``f`` at ``x`` by central differences.

    ``f`` receives the perturbed array and must not hold on to it; the same
    buffer is reused for every probe.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + epsilon
        f_plus = float(f(x))
        flat[k] = orig - epsilon
        f_minus = float(f(x))
        flat[k] = orig
        gflat[k] = (f_plus - f_minus) / (2.0 * epsilon)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """max over elements of |ga - gn| / max(|gn|, floor)."""
    ga = np.asarray(analytic, dtype=np.float64).reshape(-1)
    gn = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if ga.shape != gn.shape:
        raise ValueError(f"gradient shapes differ: {ga.shape} vs {gn.shape}")
    if ga.size == 0:
        return 0.0
    return float(np.max(np.abs(ga - gn) / np.maximum(np.abs(gn), floor)))
