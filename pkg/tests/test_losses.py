import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadlab.losses import (
    LABEL_DISSIMILAR,
    LABEL_SIMILAR,
    MarginConfig,
    contrastive_loss,
    pair_softmax_loss,
    quadruplet_loss,
    triplet_embed_loss,
    triplet_metric_loss,
)
from quadlab.numeric import make_rng

from helpers import fd_gradient, rel_err

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_triplet_embed_inactive_hinge():
    lv = triplet_embed_loss(0.1, 0.9, 0.5)
    assert lv.total == 0.0
    assert lv.grads["d_ij"] == 0.0 and lv.grads["d_ik"] == 0.0


def test_triplet_embed_direct_value():
    lv = triplet_embed_loss(0.2, 0.9, 1.0)
    assert lv.total == pytest.approx(0.23, abs=1e-15)
    assert lv.grads["d_ij"] == pytest.approx(0.4)
    assert lv.grads["d_ik"] == pytest.approx(-1.8)


def test_triplet_embed_gradient_finite_differences():
    rng = make_rng(0)
    for _ in range(50):
        alpha = rng.uniform(0.1, 1.0)
        d = rng.uniform(0.05, 0.95, size=2)
        if abs(d[0] ** 2 - d[1] ** 2 + alpha) < 1e-3:
            continue
        lv = triplet_embed_loss(d[0], d[1], alpha)
        fd = fd_gradient(lambda v: triplet_embed_loss(v[0], v[1], alpha).total, d)
        assert rel_err([lv.grads["d_ij"], lv.grads["d_ik"]], fd, atol=1e-10) < 1e-8


def test_triplet_embed_rejects_negative_margin():
    with pytest.raises(ValueError):
        triplet_embed_loss(0.1, 0.2, -0.5)


def test_triplet_metric_equal_scores():
    lv = triplet_metric_loss(0.3, 0.3, 0.5)
    assert lv.total == pytest.approx(0.5)


def test_triplet_metric_boundary_inactive():
    lv = triplet_metric_loss(0.0, 1.0, 1.0)
    assert lv.total == 0.0
    assert lv.grads["g_ij"] == 0.0 and lv.grads["g_ik"] == 0.0


def test_triplet_metric_domain_error_for_unnormalized_scores():
    with pytest.raises(ValueError, match="outside"):
        triplet_metric_loss(1.4, 0.5, 0.5)
    # the unnormalized baseline opts out explicitly
    lv = triplet_metric_loss(1.4, 0.5, 0.5, check_range=False)
    assert lv.total > 0


def test_triplet_metric_batch_sum_matches_loop_oracle():
    rng = make_rng(4)
    g_ij = rng.uniform(0, 1, size=64)
    g_ik = rng.uniform(0, 1, size=64)
    alpha = 0.7
    total = sum(triplet_metric_loss(a, b, alpha).total for a, b in zip(g_ij, g_ik))
    oracle = 0.0
    for a, b in zip(g_ij, g_ik):
        z = a * a - b * b + alpha
        if z > 0:
            oracle += z
    assert total == pytest.approx(oracle, abs=1e-12)


def test_quadruplet_direct_value():
    lv = quadruplet_loss(0.2, 0.8, 0.6, MarginConfig(alpha1=1.0, alpha2=0.5))
    assert lv.terms["term1"] == pytest.approx(0.40, abs=1e-15)
    assert lv.terms["term2"] == pytest.approx(0.18, abs=1e-15)
    assert lv.total == pytest.approx(0.58, abs=1e-15)


def test_quadruplet_fixed_margin_defaults():
    margins = MarginConfig()
    assert margins.alpha1 == 1.0
    assert margins.alpha2 == 0.5


def test_quadruplet_both_hinges_inactive():
    lv = quadruplet_loss(0.0, 1.0, 1.0, MarginConfig(alpha1=1.0, alpha2=0.5))
    assert lv.total == 0.0
    assert all(v == 0.0 for v in lv.grads.values())


def test_quadruplet_margin_order_enforced():
    with pytest.raises(ValueError, match="alpha1 >= alpha2"):
        quadruplet_loss(0.2, 0.4, 0.3, MarginConfig(alpha1=0.2, alpha2=0.5))


def test_negative_margins_rejected():
    with pytest.raises(ValueError):
        MarginConfig(alpha1=-1.0)


@given(g_ij=unit, g_ik=unit, g_lk=unit)
@settings(max_examples=200, deadline=None)
def test_quadruplet_reduces_to_triplet_without_term2(g_ij, g_ik, g_lk):
    margins = MarginConfig(alpha1=0.8, alpha2=0.3)
    quad = quadruplet_loss(g_ij, g_ik, g_lk, margins)
    trip = triplet_metric_loss(g_ij, g_ik, margins.alpha1)
    assert quad.terms["term1"] == trip.total
    assert quad.total - quad.terms["term2"] == pytest.approx(trip.total, abs=1e-12)


@given(g_ij=unit, g_ik=unit, g_lk=unit)
@settings(max_examples=200, deadline=None)
def test_losses_are_nonnegative_and_zero_iff_inactive(g_ij, g_ik, g_lk):
    margins = MarginConfig(alpha1=0.6, alpha2=0.2)
    lv = quadruplet_loss(g_ij, g_ik, g_lk, margins)
    assert lv.total >= 0.0
    z1 = g_ij**2 - g_ik**2 + margins.alpha1
    z2 = g_ij**2 - g_lk**2 + margins.alpha2
    assert (lv.total == 0.0) == (z1 <= 0.0 and z2 <= 0.0)


def test_quadruplet_gradient_finite_differences():
    rng = make_rng(6)
    margins = MarginConfig(alpha1=0.8, alpha2=0.3)
    checked = 0
    while checked < 50:
        g = rng.uniform(0.05, 0.95, size=3)
        z1 = g[0] ** 2 - g[1] ** 2 + margins.alpha1
        z2 = g[0] ** 2 - g[2] ** 2 + margins.alpha2
        if min(abs(z1), abs(z2)) < 1e-3:
            continue
        lv = quadruplet_loss(g[0], g[1], g[2], margins)

        def f(v):
            t1 = max(0.0, v[0] ** 2 - v[1] ** 2 + margins.alpha1)
            t2 = max(0.0, v[0] ** 2 - v[2] ** 2 + margins.alpha2)
            return t1 + t2

        fd = fd_gradient(f, g)
        analytic = [lv.grads["g_ij"], lv.grads["g_ik"], lv.grads["g_lk"]]
        assert rel_err(analytic, fd, atol=1e-10) < 1e-8
        checked += 1


def test_contrastive_positive_zero():
    assert contrastive_loss(0.0, LABEL_SIMILAR, 0.5).total == 0.0


def test_contrastive_negative_inactive():
    lv = contrastive_loss(0.9, LABEL_DISSIMILAR, 0.5)
    assert lv.total == 0.0
    assert lv.grads["score"] == 0.0


def test_contrastive_negative_active_value():
    lv = contrastive_loss(0.4, LABEL_DISSIMILAR, 0.5)
    assert lv.total == pytest.approx(0.34, abs=1e-15)
    assert lv.grads["score"] == pytest.approx(-0.8)


def test_contrastive_rejects_other_labels():
    with pytest.raises(ValueError, match="label"):
        contrastive_loss(0.5, 2, 0.5)


def test_contrastive_gradient_finite_differences():
    rng = make_rng(8)
    for label in (LABEL_SIMILAR, LABEL_DISSIMILAR):
        for _ in range(25):
            alpha = rng.uniform(0.2, 1.0)
            s = rng.uniform(0.05, 0.95)
            if abs(alpha - s * s) < 1e-3:
                continue
            lv = contrastive_loss(s, label, alpha)
            fd = fd_gradient(lambda v: contrastive_loss(float(v[0]), label, alpha).total,
                             np.array([s]))
            assert rel_err([lv.grads["score"]], fd, atol=1e-10) < 1e-8


def test_pair_softmax_symmetric_logits():
    for label in (LABEL_SIMILAR, LABEL_DISSIMILAR):
        lv = pair_softmax_loss(np.zeros(2), label)
        assert lv.total == pytest.approx(np.log(2.0), abs=1e-15)


def test_pair_softmax_gradient_closed_form_and_fd():
    rng = make_rng(9)
    for _ in range(25):
        z = rng.uniform(-3, 3, size=2)
        label = int(rng.integers(2))
        lv = pair_softmax_loss(z, label)
        exp = np.exp(z - z.max())
        probs = exp / exp.sum()
        onehot = np.array([1.0, 0.0]) if label == LABEL_SIMILAR else np.array([0.0, 1.0])
        assert rel_err(lv.grads["logits"], probs - onehot, atol=1e-12) < 1e-12
        fd = fd_gradient(lambda v: pair_softmax_loss(v, label).total, z)
        assert rel_err(lv.grads["logits"], fd) < 1e-6


def test_pair_softmax_saturation():
    lv = pair_softmax_loss(np.array([50.0, 0.0]), LABEL_SIMILAR)
    assert lv.total < 1e-20


def test_pair_softmax_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        pair_softmax_loss(np.array([np.nan, 0.0]), LABEL_SIMILAR)
