"""Central finite-difference verification of every analytic gradient.

Each suite draws seeded random instances, rejecting draws that land
within a guard band of a non-differentiable point (hinge boundaries,
ReLU kinks, zero distances), and compares analytic gradients against
central differences with step ``eps``. The relative error uses the larger
of the two magnitudes as the scale; entries where both are below ``atol``
compare absolutely, so exact zeros do not blow up the ratio.
"""

from __future__ import annotations

import numpy as np

from . import losses
from .model import (
    distance_backward,
    embed_batch,
    embed_backward,
    init_params,
    pair_distances,
    score_backward,
    score_pairs,
)
from .numeric import (
    affine_backward,
    affine_forward,
    make_rng,
    relu_backward,
    relu_forward,
    softmax2_backward,
    softmax2_forward,
)
from .quadruplets import batch_loss_adaptive, eq5_comparison

EPS = 1e-5
GUARD = 1e-3  # minimum distance from hinge boundaries / kinks
PASS_THRESHOLD = 1e-5
DEFAULT_INSTANCES = 100


def central_difference(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to array x."""
    x = np.asarray(x, dtype=np.float64)
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


def max_rel_err(analytic, numeric, atol: float = 1e-4) -> float:
    """Max relative deviation; entries with both magnitudes < atol compare absolutely.

    Central differences at eps=1e-5 on an O(1) function resolve ~1e-11
    absolute, so entries below ~1e-4 cannot support a meaningful relative
    comparison; they are held to the same numeric threshold absolutely,
    which still exposes any genuinely missing term.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {n.shape}")
    scale = np.maximum(np.abs(a), np.abs(n))
    err = np.abs(a - n)
    rel = np.where(scale > atol, err / np.where(scale > atol, scale, 1.0), err)
    return float(rel.max()) if rel.size else 0.0


def _draw_away_from(rng, low, high, boundary_fn, tries: int = 1000):
    """Uniform draw rejected until boundary_fn(draw) clears the guard band."""
    for _ in range(tries):
        x = rng.uniform(low, high)
        if abs(boundary_fn(x)) > GUARD:
            return x
    raise RuntimeError("could not draw a point away from the boundary")


# --------------------------------------------------------------------------
# primitive suites


def check_affine(rng) -> float:
    x = rng.uniform(-1, 1, size=(3, 4))
    w = rng.uniform(-1, 1, size=(4, 2))
    b = rng.uniform(-1, 1, size=2)
    u = rng.uniform(-1, 1, size=(3, 2))  # random projection makes the loss scalar
    dx, dw, db = affine_backward(u, x, w)
    worst = max_rel_err(dx, central_difference(lambda v: float((u * affine_forward(v, w, b)).sum()), x))
    worst = max(worst, max_rel_err(dw, central_difference(lambda v: float((u * affine_forward(x, v, b)).sum()), w)))
    worst = max(worst, max_rel_err(db, central_difference(lambda v: float((u * affine_forward(x, w, v)).sum()), b)))
    return worst


def check_relu(rng) -> float:
    x = rng.uniform(-1, 1, size=(4, 3))
    x[np.abs(x) < GUARD] += 2 * GUARD  # stay clear of the kink
    u = rng.uniform(-1, 1, size=x.shape)
    dx = relu_backward(u, x)
    fd = central_difference(lambda v: float((u * relu_forward(v)).sum()), x)
    return max_rel_err(dx, fd)


def check_softmax2(rng) -> float:
    z = rng.uniform(-3, 3, size=2)
    u = rng.uniform(-1, 1, size=2)
    p = softmax2_forward(z)
    dz = softmax2_backward(u, p)
    fd = central_difference(lambda v: float((u * softmax2_forward(v)).sum()), z)
    return max_rel_err(dz, fd)


# --------------------------------------------------------------------------
# loss suites (inputs kept away from hinge boundaries)


def check_triplet_embed(rng) -> float:
    alpha = rng.uniform(0.1, 1.0)
    while True:
        d = rng.uniform(0.05, 0.95, size=2)
        if abs(d[0] ** 2 - d[1] ** 2 + alpha) > GUARD:
            break
    lv = losses.triplet_embed_loss(d[0], d[1], alpha)
    fd = central_difference(
        lambda v: losses.triplet_embed_loss(v[0], v[1], alpha).total, d
    )
    return max_rel_err([lv.grads["d_ij"], lv.grads["d_ik"]], fd)


def check_triplet_metric(rng) -> float:
    alpha = rng.uniform(0.1, 1.0)
    while True:
        g = rng.uniform(0.05, 0.95, size=2)
        if abs(g[0] ** 2 - g[1] ** 2 + alpha) > GUARD:
            break
    lv = losses.triplet_metric_loss(g[0], g[1], alpha)
    fd = central_difference(
        lambda v: losses.triplet_metric_loss(v[0], v[1], alpha, check_range=False).total, g
    )
    return max_rel_err([lv.grads["g_ij"], lv.grads["g_ik"]], fd)


def check_quadruplet(rng) -> float:
    margins = losses.MarginConfig(alpha1=rng.uniform(0.5, 1.0), alpha2=rng.uniform(0.1, 0.5))
    while True:
        g = rng.uniform(0.05, 0.95, size=3)
        z1 = g[0] ** 2 - g[1] ** 2 + margins.alpha1
        z2 = g[0] ** 2 - g[2] ** 2 + margins.alpha2
        if abs(z1) > GUARD and abs(z2) > GUARD:
            break
    lv = losses.quadruplet_loss(g[0], g[1], g[2], margins)

    def f(v):
        sq = v[0] ** 2
        t1 = max(0.0, sq - v[1] ** 2 + margins.alpha1)
        t2 = max(0.0, sq - v[2] ** 2 + margins.alpha2)
        return t1 + t2

    fd = central_difference(f, g)
    return max_rel_err([lv.grads["g_ij"], lv.grads["g_ik"], lv.grads["g_lk"]], fd)


def check_contrastive(rng) -> float:
    alpha = rng.uniform(0.2, 1.0)
    label = int(rng.integers(2))
    s = _draw_away_from(rng, 0.05, 0.95, lambda v: alpha - v * v)
    lv = losses.contrastive_loss(s, label, alpha)
    fd = central_difference(
        lambda v: losses.contrastive_loss(float(v[0]), label, alpha).total,
        np.array([s]),
    )
    return max_rel_err([lv.grads["score"]], fd)


def check_pair_softmax(rng) -> float:
    z = rng.uniform(-3, 3, size=2)
    label = int(rng.integers(2))
    lv = losses.pair_softmax_loss(z, label)
    fd = central_difference(lambda v: losses.pair_softmax_loss(v, label).total, z)
    return max_rel_err(lv.grads["logits"], fd)


# --------------------------------------------------------------------------
# model suites (small three-layer net, random parameter-space directions)


def _small_net(rng, head_kind="softmax2"):
    params = init_params(
        5, [6, 4, 3], head_kind=head_kind, seed=int(rng.integers(2**31)), head_dims=[4]
    )
    return params


def _relu_safe(params, x) -> bool:
    """Reject draws near a ReLU kink or with a nearly-degenerate embedding norm."""
    try:
        _, cache = embed_batch(params, x)
    except ValueError:
        return False
    n_layers = len(params.layers)
    for li, z in enumerate(cache.pre_acts):
        if li < n_layers - 1 and np.any(np.abs(z) < GUARD):
            return False
    return bool(np.all(cache.norms > 0.05))


def _pair_safe(params, xi, xj) -> bool:
    """Also require the head's hidden pre-activations to clear the kinks."""
    if not (_relu_safe(params, xi) and _relu_safe(params, xj)):
        return False
    _, cache = score_pairs(params, xi, xj)
    for z in cache.head_pre_acts[:-1]:
        if np.any(np.abs(z) < GUARD):
            return False
    return True


def _param_fd(params, f) -> list[np.ndarray]:
    grads = []
    for arr in params.arrays():
        grads.append(central_difference(lambda _v: f(), arr))
    return grads


def check_embed(rng) -> float:
    while True:
        params = _small_net(rng)
        x = rng.uniform(-1, 1, size=(2, 5))
        if _relu_safe(params, x):
            break
    u = rng.uniform(-1, 1, size=(2, 3))
    _, cache = embed_batch(params, x)
    analytic = embed_backward(params, cache, u)

    def f():
        out, _ = embed_batch(params, x)
        return float((u * out).sum())

    fd = _param_fd(params, f)
    n_embed = 2 * len(params.layers)  # head arrays unused by the embedding path
    worst = 0.0
    for a, n in zip(analytic.arrays()[:n_embed], fd[:n_embed]):
        worst = max(worst, max_rel_err(a, n))
    return worst


def check_backward_pair(rng, head_kind="softmax2") -> float:
    while True:
        params = _small_net(rng, head_kind)
        xi = rng.uniform(-1, 1, size=(2, 5))
        xj = rng.uniform(-1, 1, size=(2, 5))
        if _pair_safe(params, xi, xj):
            break
    u = rng.uniform(-1, 1, size=2)
    _, cache = score_pairs(params, xi, xj)
    analytic = score_backward(params, cache, u)

    def f():
        g, _ = score_pairs(params, xi, xj)
        return float((u * g).sum())

    fd = _param_fd(params, f)
    worst = 0.0
    for a, n in zip(analytic.arrays(), fd):
        worst = max(worst, max_rel_err(a, n))
    return worst


def check_aux_softmax_path(rng) -> float:
    """Cross-entropy injected at the logits, chained through the whole model."""
    while True:
        params = _small_net(rng)
        xi = rng.uniform(-1, 1, size=(2, 5))
        xj = rng.uniform(-1, 1, size=(2, 5))
        if _pair_safe(params, xi, xj):
            break
    _, cache = score_pairs(params, xi, xj)
    total_dlogits = np.zeros_like(cache.logits)
    for row in range(2):
        lv = losses.pair_softmax_loss(cache.logits[row], losses.LABEL_SIMILAR)
        total_dlogits[row] = lv.grads["logits"]
    analytic = score_backward(params, cache, np.zeros(2), total_dlogits)

    def f():
        _, c = score_pairs(params, xi, xj)
        return sum(
            losses.pair_softmax_loss(c.logits[row], losses.LABEL_SIMILAR).total
            for row in range(2)
        )

    fd = _param_fd(params, f)
    worst = 0.0
    for a, n in zip(analytic.arrays(), fd):
        worst = max(worst, max_rel_err(a, n))
    return worst


def check_distance_path(rng) -> float:
    while True:
        params = _small_net(rng)
        xi = rng.uniform(-1, 1, size=(2, 5))
        xj = rng.uniform(-1, 1, size=(2, 5))
        if not (_relu_safe(params, xi) and _relu_safe(params, xj)):
            continue
        d, _ = pair_distances(params, xi, xj)
        if np.all(d > GUARD):
            break
    u = rng.uniform(-1, 1, size=2)
    d, cache = pair_distances(params, xi, xj)
    analytic = distance_backward(params, cache, u)

    def f():
        dd, _ = pair_distances(params, xi, xj)
        return float((u * dd).sum())

    fd = _param_fd(params, f)
    n_embed = 2 * len(params.layers)
    worst = 0.0
    for a, n in zip(analytic.arrays()[:n_embed], fd[:n_embed]):
        worst = max(worst, max_rel_err(a, n))
    return worst


# --------------------------------------------------------------------------
# adaptive batch loss


def _safe_adaptive_batch(rng, m: int):
    """Scores whose hinge arguments and mu stay clear of boundaries."""
    while True:
        g_ij = rng.uniform(0.05, 0.7, size=m)
        g_ik = rng.uniform(0.3, 0.95, size=m)
        g_lk = rng.uniform(0.3, 0.95, size=m)
        stats_mu = float(np.mean(g_ik**2 / 2 + g_lk**2 / 2) - np.mean(g_ij**2))
        a1, a2 = max(stats_mu, 0.0), max(stats_mu, 0.0) / 2
        z1 = g_ij**2 - g_ik**2 + a1
        z2 = g_ij**2 - g_lk**2 + a2
        if abs(stats_mu) > GUARD and np.all(np.abs(z1) > GUARD) and np.all(np.abs(z2) > GUARD):
            return g_ij, g_ik, g_lk


def check_adaptive_batch(rng, m: int) -> float:
    g_ij, g_ik, g_lk = _safe_adaptive_batch(rng, m)
    result = batch_loss_adaptive(g_ij, g_ik, g_lk, mode="exact")

    def total(a, b, c):
        return batch_loss_adaptive(a, b, c, mode="exact").loss.total

    worst = 0.0
    worst = max(worst, max_rel_err(
        result.grads["g_ij"], central_difference(lambda v: total(v, g_ik, g_lk), g_ij)
    ))
    worst = max(worst, max_rel_err(
        result.grads["g_ik"], central_difference(lambda v: total(g_ij, v, g_lk), g_ik)
    ))
    worst = max(worst, max_rel_err(
        result.grads["g_lk"], central_difference(lambda v: total(g_ij, g_ik, v), g_lk)
    ))
    return worst


# --------------------------------------------------------------------------
# orchestration

SUITES = {
    "affine": check_affine,
    "relu": check_relu,
    "softmax2": check_softmax2,
    "loss_triplet_embed": check_triplet_embed,
    "loss_triplet_metric": check_triplet_metric,
    "loss_quadruplet": check_quadruplet,
    "loss_contrastive": check_contrastive,
    "loss_pair_softmax": check_pair_softmax,
    "model_embed": check_embed,
    "model_backward_pair": check_backward_pair,
    "model_backward_pair_raw1": lambda rng: check_backward_pair(rng, "raw1"),
    "model_aux_softmax_path": check_aux_softmax_path,
    "model_distance_path": check_distance_path,
    "adaptive_batch_m2": lambda rng: check_adaptive_batch(rng, 2),
    "adaptive_batch_m8": lambda rng: check_adaptive_batch(rng, 8),
    "adaptive_batch_m32": lambda rng: check_adaptive_batch(rng, 32),
}

# the heavy model suites check hundreds of parameters per instance
_INSTANCE_OVERRIDES = {
    "model_embed": 20,
    "model_backward_pair": 20,
    "model_backward_pair_raw1": 20,
    "model_aux_softmax_path": 10,
    "model_distance_path": 20,
    "adaptive_batch_m32": 30,
}


def run_all(seed: int = 0, instances: int = DEFAULT_INSTANCES) -> dict:
    """Run every suite; returns per-suite max relative errors and the
    closed-form/exact gradient comparison."""
    rng = make_rng(seed)
    results = {}
    for name, check in SUITES.items():
        n = min(instances, _INSTANCE_OVERRIDES.get(name, instances))
        worst = 0.0
        for _ in range(n):
            worst = max(worst, check(rng))
        results[name] = worst

    comparison = eq5_comparison(*_safe_adaptive_batch(rng, 32))
    return {
        "max_rel_errors": results,
        "overall_max": max(results.values()),
        "pass_threshold": PASS_THRESHOLD,
        "passed": max(results.values()) < PASS_THRESHOLD,
        "eq5_comparison": comparison,
    }
