"""Embedding network and learned pairwise metric head with exact backprop.

The embedding is an MLP with ReLU between layers whose output is
L2-normalized to unit length. A pair of inputs is scored by concatenating
the two embeddings (probe first) and passing the joint vector through a
small head MLP (ReLU between layers):

* ``softmax2`` head: two output logits, softmax-normalized; the second
  component is the dissimilarity score g in (0, 1).
* ``raw1`` head: a single unnormalized output used directly as g. This is
  the deliberately non-normalized variant kept as a baseline; its scores
  are not confined to [0, 1].

The head needs at least one hidden layer to be useful: a single affine
map on a concatenation is additively separable in the two embeddings, so
it would order every gallery identically for all probes.

All backward functions return gradients in a :class:`ModelGrads` with the
same layout as :class:`ModelParams`, computed exactly (verified against
finite differences in the test suite).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numeric import (
    affine_backward,
    affine_forward,
    make_rng,
    relu_backward,
    relu_forward,
    sgd_update,
    softmax2_backward,
    softmax2_forward,
)

CHECKPOINT_VERSION = 1
HEAD_KINDS = ("softmax2", "raw1")


def _mlp_forward(layers, h: np.ndarray) -> tuple[np.ndarray, list, list]:
    """Affine stack with ReLU between layers (none after the last)."""
    inputs, pre_acts = [], []
    n = len(layers)
    for li, (w, b) in enumerate(layers):
        inputs.append(h)
        z = affine_forward(h, w, b)
        pre_acts.append(z)
        h = relu_forward(z) if li < n - 1 else z
    return h, inputs, pre_acts


def _mlp_backward(layers, inputs, pre_acts, dh: np.ndarray, grad_layers) -> np.ndarray:
    """Accumulate layer gradients into grad_layers; returns gradient at the input."""
    n = len(layers)
    for li in range(n - 1, -1, -1):
        w, _ = layers[li]
        if li < n - 1:
            dh = relu_backward(dh, pre_acts[li])
        dh, dw, db = affine_backward(dh, inputs[li], w)
        gw, gb = grad_layers[li]
        gw += dw
        gb += db
    return dh


@dataclass
class ModelParams:
    """Embedding layer weights plus the metric head stack."""

    layers: list  # embedding [(weights, bias), ...]
    head_layers: list  # head [(weights, bias), ...], last layer emits the logits
    head_kind: str = "softmax2"

    @property
    def input_dim(self) -> int:
        if self.layers:
            return self.layers[0][0].shape[0]
        return self.head_layers[0][0].shape[0] // 2

    @property
    def embed_dim(self) -> int:
        if self.layers:
            return self.layers[-1][0].shape[1]
        return self.head_layers[0][0].shape[0] // 2

    def copy(self) -> "ModelParams":
        return ModelParams(
            [(w.copy(), b.copy()) for w, b in self.layers],
            [(w.copy(), b.copy()) for w, b in self.head_layers],
            self.head_kind,
        )

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order, aligned with ModelGrads.arrays()."""
        out = []
        for w, b in self.layers + self.head_layers:
            out += [w, b]
        return out


@dataclass
class ModelGrads:
    layers: list
    head_layers: list

    def iadd(self, other: "ModelGrads") -> "ModelGrads":
        for (w, b), (ow, ob) in zip(self.layers, other.layers):
            w += ow
            b += ob
        for (w, b), (ow, ob) in zip(self.head_layers, other.head_layers):
            w += ow
            b += ob
        return self

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.layers + self.head_layers:
            out += [w, b]
        return out


def zero_grads(params: ModelParams) -> ModelGrads:
    return ModelGrads(
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers],
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.head_layers],
    )


def init_params(
    input_dim: int,
    embed_dims: list[int],
    head_kind: str = "softmax2",
    seed: int = 0,
    head_dims: list[int] | None = None,
) -> ModelParams:
    """Uniform +-sqrt(6/fan_in) weights, zero biases, seeded.

    ``embed_dims`` lists the MLP widths after the input, e.g. [64, 32];
    an empty list gives the identity embedding (inputs are only
    L2-normalized). ``head_dims`` lists the hidden widths of the pair
    head (default one hidden layer of 32); the output width is 2 for a
    softmax2 head, 1 for raw1.
    """
    if head_kind not in HEAD_KINDS:
        raise ValueError(f"head_kind must be one of {HEAD_KINDS}, got {head_kind!r}")
    rng = make_rng(seed)

    def uniform_layer(fan_in, fan_out):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)

    layers = []
    fan_in = input_dim
    for width in embed_dims:
        layers.append(uniform_layer(fan_in, width))
        fan_in = width

    head_layers = []
    head_fan = 2 * fan_in
    for width in [32] if head_dims is None else list(head_dims):
        head_layers.append(uniform_layer(head_fan, width))
        head_fan = width
    head_layers.append(uniform_layer(head_fan, 2 if head_kind == "softmax2" else 1))
    return ModelParams(layers, head_layers, head_kind)


# --------------------------------------------------------------------------
# embedding forward/backward


@dataclass
class EmbedCache:
    inputs: list  # input of each affine layer
    pre_acts: list  # affine outputs, pre-ReLU (last layer has no ReLU)
    pre_norm: np.ndarray  # (n, e) final layer output before normalization
    norms: np.ndarray  # (n, 1)


def embed_batch(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, EmbedCache]:
    """MLP forward, rows are samples; output rows have unit L2 norm."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if params.layers and h.shape[1] != params.input_dim:
        raise ValueError(
            f"input dim {h.shape[1]} does not match model input dim {params.input_dim}"
        )
    h, inputs, pre_acts = _mlp_forward(params.layers, h)
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding; cannot L2-normalize")
    out = h / norms
    return out, EmbedCache(inputs, pre_acts, h, norms)


def embed_backward(params: ModelParams, cache: EmbedCache, d_out: np.ndarray) -> ModelGrads:
    """Gradients of the embedding parameters for upstream d_out on the unit output."""
    d_out = np.atleast_2d(np.asarray(d_out, dtype=np.float64))
    y = cache.pre_norm / cache.norms
    # y = h/|h|  =>  dL/dh = (dL/dy - y * <dL/dy, y>) / |h|
    dh = (d_out - y * (d_out * y).sum(axis=1, keepdims=True)) / cache.norms
    grads = zero_grads(params)
    _mlp_backward(params.layers, cache.inputs, cache.pre_acts, dh, grads.layers)
    return grads


def embed(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Unit-norm embedding of a single feature vector."""
    out, _ = embed_batch(params, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return out[0]


# --------------------------------------------------------------------------
# embedding distance (the Euclidean route)


@dataclass
class DistCache:
    cache_i: EmbedCache
    cache_j: EmbedCache
    diff: np.ndarray  # (n, e) f_i - f_j
    dist: np.ndarray  # (n,)


def pair_distances(params: ModelParams, xi: np.ndarray, xj: np.ndarray) -> tuple[np.ndarray, DistCache]:
    """Halved Euclidean distance between unit embeddings, in [0, 1] per row.

    Unit vectors put the raw norm in [0, 2]; halving pins the advertised
    [0, 1] range.
    """
    fi, ci = embed_batch(params, xi)
    fj, cj = embed_batch(params, xj)
    diff = fi - fj
    dist = 0.5 * np.linalg.norm(diff, axis=1)
    return dist, DistCache(ci, cj, diff, dist)


def distance_backward(params: ModelParams, cache: DistCache, d_dist: np.ndarray) -> ModelGrads:
    """Backprop through d = |f_i - f_j|/2; subgradient 0 where d == 0."""
    d_dist = np.asarray(d_dist, dtype=np.float64)
    safe = np.where(cache.dist > 0.0, cache.dist, 1.0)
    scale = np.where(cache.dist > 0.0, d_dist / (4.0 * safe), 0.0)[:, None]
    d_fi = scale * cache.diff
    grads = embed_backward(params, cache.cache_i, d_fi)
    grads.iadd(embed_backward(params, cache.cache_j, -d_fi))
    return grads


def embed_distance(params: ModelParams, xi: np.ndarray, xj: np.ndarray) -> float:
    d, _ = pair_distances(
        params,
        np.asarray(xi, dtype=np.float64).reshape(1, -1),
        np.asarray(xj, dtype=np.float64).reshape(1, -1),
    )
    return float(d[0])


# --------------------------------------------------------------------------
# learned metric head


@dataclass(frozen=True)
class PairScore:
    """Learned dissimilarity g in [0, 1] plus the pre-normalization logits."""

    g: float
    logits: np.ndarray
    p_similar: float


@dataclass
class PairCache:
    cache_i: EmbedCache
    cache_j: EmbedCache
    head_inputs: list
    head_pre_acts: list
    logits: np.ndarray  # (n, 2) or (n, 1)
    probs: np.ndarray | None  # (n, 2) for softmax2 heads


def score_pairs(params: ModelParams, xi: np.ndarray, xj: np.ndarray) -> tuple[np.ndarray, PairCache]:
    """Dissimilarity scores for row-aligned pairs (probe rows first in the joint)."""
    fi, ci = embed_batch(params, xi)
    fj, cj = embed_batch(params, xj)
    joint = np.concatenate([fi, fj], axis=1)
    logits, inputs, pre_acts = _mlp_forward(params.head_layers, joint)
    if params.head_kind == "softmax2":
        probs = softmax2_forward(logits)
        g = probs[:, 1]
    else:
        probs = None
        g = logits[:, 0]
    return g, PairCache(ci, cj, inputs, pre_acts, logits, probs)


def score_backward(
    params: ModelParams,
    cache: PairCache,
    d_g: np.ndarray,
    d_logits: np.ndarray | None = None,
) -> ModelGrads:
    """Gradients of all parameters given upstream on g (and optionally the logits).

    ``d_logits`` carries gradient injected directly at the pre-softmax
    logits, used by the auxiliary cross-entropy loss.
    """
    d_g = np.asarray(d_g, dtype=np.float64)
    if params.head_kind == "softmax2":
        up = np.zeros_like(cache.probs)
        up[:, 1] = d_g
        dz = softmax2_backward(up, cache.probs)
    else:
        dz = d_g[:, None].copy()
    if d_logits is not None:
        dz = dz + np.asarray(d_logits, dtype=np.float64).reshape(dz.shape)

    grads = zero_grads(params)
    d_joint = _mlp_backward(
        params.head_layers, cache.head_inputs, cache.head_pre_acts, dz, grads.head_layers
    )
    e = d_joint.shape[1] // 2
    grads.iadd(embed_backward(params, cache.cache_i, d_joint[:, :e]))
    grads.iadd(embed_backward(params, cache.cache_j, d_joint[:, e:]))
    return grads


def metric_score(params: ModelParams, xi: np.ndarray, xj: np.ndarray) -> PairScore:
    """Score one pair through the normalized two-dimensional head."""
    if params.head_kind != "softmax2":
        raise ValueError("metric_score requires a softmax2 head; raw1 heads yield"
                         " unnormalized scores via score_pairs")
    g, cache = score_pairs(
        params,
        np.asarray(xi, dtype=np.float64).reshape(1, -1),
        np.asarray(xj, dtype=np.float64).reshape(1, -1),
    )
    return PairScore(float(g[0]), cache.logits[0].copy(), float(cache.probs[0, 0]))


def backward_pair(params: ModelParams, cache: PairCache, d_g) -> ModelGrads:
    """Chain-rule wrapper for a cached :func:`score_pairs` call."""
    if cache is None:
        raise ValueError("missing forward cache; call score_pairs first")
    return score_backward(params, cache, np.atleast_1d(np.asarray(d_g, dtype=np.float64)))


# --------------------------------------------------------------------------
# SGD and checkpoints


def sgd_step(
    params: ModelParams,
    grads: ModelGrads,
    learning_rate: float,
    momentum: float = 0.0,
    velocity: ModelGrads | None = None,
) -> tuple[ModelParams, ModelGrads | None]:
    """One SGD update; with momentum > 0, velocity is carried between calls."""
    if momentum != 0.0:
        if velocity is None:
            velocity = zero_grads(params)
        for (vw, vb), (gw, gb) in zip(velocity.layers + velocity.head_layers,
                                      grads.layers + grads.head_layers):
            vw *= momentum
            vw += gw
            vb *= momentum
            vb += gb
        effective = velocity
    else:
        effective = grads
    new = ModelParams(
        [
            (sgd_update(w, gw, learning_rate), sgd_update(b, gb, learning_rate))
            for (w, b), (gw, gb) in zip(params.layers, effective.layers)
        ],
        [
            (sgd_update(w, gw, learning_rate), sgd_update(b, gb, learning_rate))
            for (w, b), (gw, gb) in zip(params.head_layers, effective.head_layers)
        ],
        params.head_kind,
    )
    return new, velocity


def save_checkpoint(params: ModelParams, path: str, meta: dict | None = None) -> None:
    """Versioned JSON checkpoint; float64 values round-trip exactly."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "head_kind": params.head_kind,
        "embedding_layers": [
            {"weights": w.tolist(), "bias": b.tolist()} for w, b in params.layers
        ],
        "head_layers": [
            {"weights": w.tolist(), "bias": b.tolist()} for w, b in params.head_layers
        ],
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ModelParams, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")

    def to_layers(entries):
        return [
            (np.asarray(e["weights"], dtype=np.float64), np.asarray(e["bias"], dtype=np.float64))
            for e in entries
        ]

    params = ModelParams(
        to_layers(doc["embedding_layers"]),
        to_layers(doc["head_layers"]),
        doc["head_kind"],
    )
    return params, doc.get("meta", {})
