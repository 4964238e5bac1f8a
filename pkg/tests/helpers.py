"""Shared test oracles, independent of the package's own gradcheck module."""

import numpy as np


def fd_gradient(f, x, eps=1e-5):
    """Central finite differences of scalar f with respect to array x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for idx in range(flat_x.size):
        orig = flat_x[idx]
        flat_x[idx] = orig + eps
        fp = f(x)
        flat_x[idx] = orig - eps
        fm = f(x)
        flat_x[idx] = orig
        flat_g[idx] = (fp - fm) / (2.0 * eps)
    return grad


def rel_err(analytic, numeric, atol=1e-4):
    """Max relative deviation with an absolute floor for near-zero entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    assert a.shape == n.shape
    scale = np.maximum(np.abs(a), np.abs(n))
    big = scale > atol
    out = np.where(big, np.abs(a - n) / np.where(big, scale, 1.0), np.abs(a - n))
    return float(out.max()) if out.size else 0.0


def matmul_oracle(a, b):
    """Naive triple-loop matrix product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out
