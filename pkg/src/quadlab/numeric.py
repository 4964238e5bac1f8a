"""Dense float64 primitives with explicit forward/backward rules.

Matrices are 2-D numpy float64 arrays in row-major (C) order. Every
backward rule computes the gradient of ``sum(upstream * output)`` with
respect to the forward inputs, so chained calls implement exact
backpropagation without an autodiff graph.

Randomness comes only from :func:`make_rng`, which wraps numpy's PCG64
generator; an identical seed yields an identical stream. Reductions use
numpy's fixed index-order summation, so results are bit-reproducible for
fixed inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "make_rng",
    "affine_forward",
    "affine_backward",
    "relu_forward",
    "relu_backward",
    "softmax2_forward",
    "softmax2_backward",
    "sgd_update",
]


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single source of randomness."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def _as_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def affine_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Row-wise affine map ``x @ weights + bias``.

    ``x`` is (n, d_in), ``weights`` is (d_in, d_out), ``bias`` is (d_out,)
    and broadcasts over rows.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.shape[1] != weights.shape[0]:
        raise ValueError(
            f"affine shape mismatch: input has {x.shape[1]} columns, "
            f"weights expect {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise ValueError(
            f"bias shape {bias.shape} does not match weight columns {weights.shape[1]}"
        )
    return x @ weights + bias


def affine_backward(
    upstream: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of an affine layer: returns (grad_input, grad_weights, grad_bias)."""
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if upstream.shape != (x.shape[0], weights.shape[1]):
        raise ValueError(
            f"upstream shape {upstream.shape} inconsistent with forward output "
            f"({x.shape[0]}, {weights.shape[1]})"
        )
    grad_input = upstream @ weights.T
    grad_weights = x.T @ upstream
    grad_bias = upstream.sum(axis=0)
    return grad_input, grad_weights, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Subgradient 0 at the kink (x == 0)."""
    upstream = np.asarray(upstream, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if upstream.shape != x.shape:
        raise ValueError(f"upstream shape {upstream.shape} != input shape {x.shape}")
    return np.where(x > 0.0, upstream, 0.0)


def softmax2_forward(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (max subtraction).

    Accepts a 2-vector or an (n, 2) batch; the two output components sum
    to 1 up to rounding of the final division.
    """
    z = _as_f64(logits, "logits")
    if z.shape[-1] != 2:
        raise ValueError(f"expected 2 logits on the last axis, got shape {z.shape}")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax2_backward(upstream: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient to the logits given ``probs`` from :func:`softmax2_forward`.

    dL/dz_j = p_j * (u_j - sum_i u_i p_i) for upstream u.
    """
    u = np.asarray(upstream, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if u.shape != p.shape:
        raise ValueError(f"upstream shape {u.shape} != probs shape {p.shape}")
    inner = (u * p).sum(axis=-1, keepdims=True)
    return p * (u - inner)


def sgd_update(params: np.ndarray, grads: np.ndarray, learning_rate: float) -> np.ndarray:
    """Plain SGD step ``p - lr * g``, elementwise; returns a new array."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"param shape {params.shape} != grad shape {grads.shape}")
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
    return params - learning_rate * grads
