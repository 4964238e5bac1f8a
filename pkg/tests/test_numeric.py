import numpy as np
import pytest

from quadlab.numeric import (
    affine_backward,
    affine_forward,
    make_rng,
    relu_backward,
    relu_forward,
    sgd_update,
    softmax2_backward,
    softmax2_forward,
)

from helpers import fd_gradient, matmul_oracle, rel_err


def test_affine_identity_case():
    out = affine_forward(np.array([[1.0, 0.0]]), np.eye(2), np.zeros(2))
    assert np.array_equal(out, [[1.0, 0.0]])


def test_affine_zero_input_gives_bias_rows():
    b = np.array([3.0, -1.0, 0.5])
    out = affine_forward(np.zeros((4, 2)), np.ones((2, 3)), b)
    assert np.array_equal(out, np.tile(b, (4, 1)))


def test_affine_matches_triple_loop_oracle():
    rng = make_rng(42)
    x = rng.uniform(-1, 1, size=(3, 4))
    w = rng.uniform(-1, 1, size=(4, 2))
    b = rng.uniform(-1, 1, size=2)
    expected = matmul_oracle(x, w) + b
    assert np.max(np.abs(affine_forward(x, w, b) - expected)) < 1e-12


def test_affine_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        affine_forward(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="bias"):
        affine_forward(np.ones((2, 3)), np.ones((3, 2)), np.zeros(3))


def test_affine_backward_identity_weights():
    upstream = np.ones((3, 2))
    x = make_rng(0).uniform(-1, 1, size=(3, 2))
    dx, _, _ = affine_backward(upstream, x, np.eye(2))
    assert np.array_equal(dx, upstream)


def test_affine_backward_zero_upstream():
    x = np.ones((2, 3))
    w = np.ones((3, 2))
    dx, dw, db = affine_backward(np.zeros((2, 2)), x, w)
    assert not dx.any() and not dw.any() and not db.any()


def test_affine_backward_finite_differences():
    rng = make_rng(7)
    x = rng.uniform(-1, 1, size=(3, 4))
    w = rng.uniform(-1, 1, size=(4, 2))
    b = rng.uniform(-1, 1, size=2)
    u = rng.uniform(-1, 1, size=(3, 2))
    dx, dw, db = affine_backward(u, x, w)
    assert rel_err(dw, fd_gradient(lambda v: float((u * affine_forward(x, v, b)).sum()), w)) < 1e-6
    assert rel_err(dx, fd_gradient(lambda v: float((u * affine_forward(v, w, b)).sum()), x)) < 1e-6
    assert rel_err(db, fd_gradient(lambda v: float((u * affine_forward(x, w, v)).sum()), b)) < 1e-6


def test_relu_forward_backward():
    x = np.array([[-1.0, 0.5], [2.0, -0.1]])
    assert np.array_equal(relu_forward(x), [[0.0, 0.5], [2.0, 0.0]])
    up = np.ones_like(x)
    assert np.array_equal(relu_backward(up, x), [[0.0, 1.0], [1.0, 0.0]])


def test_relu_finite_differences():
    rng = make_rng(3)
    x = rng.uniform(-1, 1, size=(4, 3))
    x[np.abs(x) < 1e-3] = 0.1  # stay off the kink
    u = rng.uniform(-1, 1, size=x.shape)
    fd = fd_gradient(lambda v: float((u * relu_forward(v)).sum()), x)
    assert rel_err(relu_backward(u, x), fd) < 1e-6


def test_softmax2_symmetry():
    for z in (-5.0, 0.0, 123.0):
        p = softmax2_forward(np.array([z, z]))
        assert p[0] == pytest.approx(0.5, abs=1e-15)
        assert p[1] == pytest.approx(0.5, abs=1e-15)


def test_softmax2_large_logits_stable():
    p = softmax2_forward(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0, abs=1e-12)
    assert p[1] == pytest.approx(0.0, abs=1e-12)


def test_softmax2_components_sum_to_one():
    rng = make_rng(11)
    z = rng.uniform(-20, 20, size=(100, 2))
    p = softmax2_forward(z)
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-15


def test_softmax2_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        softmax2_forward(np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        softmax2_forward(np.array([np.inf, 0.0]))


def test_softmax2_backward_finite_differences():
    rng = make_rng(5)
    for _ in range(20):
        z = rng.uniform(-3, 3, size=2)
        u = rng.uniform(-1, 1, size=2)
        dz = softmax2_backward(u, softmax2_forward(z))
        fd = fd_gradient(lambda v: float((u * softmax2_forward(v)).sum()), z)
        assert rel_err(dz, fd) < 1e-6


def test_sgd_update_basic():
    assert sgd_update(np.array(1.0), np.array(1.0), 0.1) == pytest.approx(0.9)


def test_sgd_update_zero_gradient():
    p = np.array([1.0, -2.0])
    assert np.array_equal(sgd_update(p, np.zeros(2), 0.5), p)


def test_default_learning_rate_is_1e_minus_3():
    from quadlab.config import TrainConfig

    assert TrainConfig().learning_rate == 1e-3


def test_sgd_rejects_bad_learning_rate():
    with pytest.raises(ValueError):
        sgd_update(np.ones(2), np.ones(2), 0.0)


def test_rng_identical_seed_identical_stream():
    a = make_rng(12345)
    b = make_rng(12345)
    assert np.array_equal(a.uniform(size=100), b.uniform(size=100))
    assert np.array_equal(a.normal(size=50), b.normal(size=50))


def test_rng_different_seed_differs():
    assert not np.array_equal(make_rng(1).uniform(size=10), make_rng(2).uniform(size=10))
