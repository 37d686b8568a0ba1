"""Finite-difference checks for every op of the reverse-mode engine."""

import numpy as np
import pytest
import scipy.sparse as sp

from saf import autodiff as ad
from saf.autodiff import Tensor, backward


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued f at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        hi = f(x)
        xf[i] = orig - h
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * h)
    return g


def check_unary(op, f_np, x, atol=1e-7):
    t = Tensor(x.copy(), requires_grad=True)
    out = op(t)
    assert np.allclose(out.value, f_np(x), atol=1e-12)
    w = np.random.default_rng(0).standard_normal(out.value.shape)
    backward(out, seed=w)

    def scalar(v):
        return float((op(Tensor(v)).value * w).sum())

    assert np.allclose(t.grad, fd_grad(scalar, x.copy()), atol=atol)


def test_elementwise_ops_match_numpy_and_fd():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 3)) * 2
    check_unary(ad.relu, lambda v: np.maximum(v, 0), x)
    check_unary(ad.sigmoid, lambda v: 1 / (1 + np.exp(-v)), x)
    check_unary(ad.absolute, np.abs, x + 0.1)  # keep away from the kink
    check_unary(lambda t: ad.clip(t, -0.5, 0.8),
                lambda v: np.clip(v, -0.5, 0.8), x)
    check_unary(lambda t: ad.maximum_scalar(t, 0.3),
                lambda v: np.maximum(v, 0.3), x)
    check_unary(lambda t: ad.tsum(t), lambda v: v.sum(), x)
    check_unary(lambda t: ad.tmean(t), lambda v: v.mean(), x)
    check_unary(lambda t: ad.tsum(t, axis=0), lambda v: v.sum(axis=0), x)
    check_unary(lambda t: ad.reshape(t, (3, 4)), lambda v: v.reshape(3, 4), x)
    check_unary(ad.transpose, lambda v: v.T, x)


def test_binary_ops_with_broadcasting():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3,)) + 2.0  # safe divisor
    for op, f_np in (
        (ad.add, np.add),
        (ad.sub, np.subtract),
        (ad.mul, np.multiply),
        (ad.div, np.divide),
    ):
        ta = Tensor(a.copy(), requires_grad=True)
        tb = Tensor(b.copy(), requires_grad=True)
        out = op(ta, tb)
        assert np.allclose(out.value, f_np(a, b))
        w = rng.standard_normal(out.value.shape)
        backward(out, seed=w)
        ga = fd_grad(lambda v: float((f_np(v, b) * w).sum()), a.copy())
        gb = fd_grad(lambda v: float((f_np(a, v) * w).sum()), b.copy())
        assert ta.grad.shape == a.shape and tb.grad.shape == b.shape
        assert np.allclose(ta.grad, ga, atol=1e-7)
        assert np.allclose(tb.grad, gb, atol=1e-7)


def test_matmul_gradients():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 4))
    b = rng.standard_normal((4, 2))
    ta = Tensor(a.copy(), requires_grad=True)
    tb = Tensor(b.copy(), requires_grad=True)
    out = ad.matmul(ta, tb)
    w = rng.standard_normal((5, 2))
    backward(out, seed=w)
    assert np.allclose(ta.grad, w @ b.T, atol=1e-12)
    assert np.allclose(tb.grad, a.T @ w, atol=1e-12)


def test_spmm_matches_dense_matmul():
    rng = np.random.default_rng(4)
    dense = rng.standard_normal((6, 6))
    dense[rng.random((6, 6)) < 0.6] = 0.0
    mat = sp.csr_array(dense)
    x = rng.standard_normal((6, 3))
    t = Tensor(x.copy(), requires_grad=True)
    out = ad.spmm(mat, t)
    assert np.allclose(out.value, dense @ x, atol=1e-12)
    w = rng.standard_normal((6, 3))
    backward(out, seed=w)
    assert np.allclose(t.grad, dense.T @ w, atol=1e-12)


def test_getitem_scatter():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 3))
    idx = np.array([1, 4, 4])  # repeated row must accumulate
    t = Tensor(x.copy(), requires_grad=True)
    out = ad.getitem(t, idx)
    w = rng.standard_normal((3, 3))
    backward(out, seed=w)
    expect = np.zeros_like(x)
    np.add.at(expect, idx, w)
    assert np.allclose(t.grad, expect)


def test_amax_first_subgradient():
    # gradient goes to the first maximal entry only
    t = Tensor(np.array([1.0, 3.0, 3.0, 0.5]), requires_grad=True)
    out = ad.amax_first(t)
    assert out.value == 3.0
    backward(out)
    assert t.grad.tolist() == [0.0, 1.0, 0.0, 0.0]


def test_clip_boundary_subgradient():
    # entries strictly inside pass gradient; clipped entries block it
    t = Tensor(np.array([-1.0, 0.0, 0.5, 2.0]), requires_grad=True)
    out = ad.tsum(ad.clip(t, 0.0, 1.0))
    backward(out)
    assert t.grad.tolist() == [0.0, 1.0, 1.0, 0.0]


def test_softmax_cross_entropy_value_and_gradient():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal((7, 4))
    labels = rng.integers(4, size=7)
    idx = np.array([0, 2, 3, 6])
    t = Tensor(logits.copy(), requires_grad=True)
    out = ad.softmax_cross_entropy(t, labels, idx)
    # reference value via explicit log-softmax
    rows = logits[idx]
    logp = rows - np.log(np.exp(rows).sum(axis=1, keepdims=True))
    want = -logp[np.arange(len(idx)), labels[idx]].mean()
    assert out.value == pytest.approx(want, abs=1e-12)
    backward(out)
    g = fd_grad(
        lambda v: float(
            ad.softmax_cross_entropy(Tensor(v), labels, idx).value
        ),
        logits.copy(),
    )
    assert np.allclose(t.grad, g, atol=1e-7)
    # rows outside the mask receive no gradient
    outside = np.setdiff1d(np.arange(7), idx)
    assert np.all(t.grad[outside] == 0)


def test_uniform_logits_loss_is_log_c():
    logits = np.zeros((5, 4))
    out = ad.softmax_cross_entropy(Tensor(logits), np.zeros(5, dtype=int),
                                   np.arange(5))
    assert out.value == pytest.approx(np.log(4.0))


def test_huge_correct_logits_drive_loss_to_zero():
    labels = np.array([0, 1])
    logits = np.array([[50.0, 0.0], [0.0, 50.0]])
    t = Tensor(logits, requires_grad=True)
    out = ad.softmax_cross_entropy(t, labels, np.arange(2))
    assert out.value < 1e-12
    backward(out)
    assert np.max(np.abs(t.grad)) < 1e-12


def test_shared_subexpression_accumulates():
    # z = x*y + x*x reuses x; both paths must contribute
    x = Tensor(np.array(3.0), requires_grad=True)
    y = Tensor(np.array(5.0), requires_grad=True)
    z = ad.add(ad.mul(x, y), ad.mul(x, x))
    backward(z)
    assert x.grad == pytest.approx(5.0 + 2 * 3.0)
    assert y.grad == pytest.approx(3.0)


def test_constants_are_free():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    c = np.full((2, 2), 4.0)
    out = ad.tsum(ad.mul(x, c))
    assert out.requires_grad
    backward(out)
    assert np.allclose(x.grad, c)
    frozen = Tensor(np.ones((2, 2)))  # no requires_grad
    out2 = ad.tsum(ad.mul(frozen, c))
    assert not out2.requires_grad


def test_operator_sugar():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = Tensor(np.array([4.0]), requires_grad=True)
    out = ad.tsum((a + b) * b - a / b + (-a))
    backward(out)
    # d/da [(a+b)b - a/b - a] = b - 1/b - 1
    assert a.grad[0] == pytest.approx(4.0 - 0.25 - 1.0)


def test_deep_chain_is_iterative():
    # a long chain must not hit the recursion limit
    x = Tensor(np.array(1.0), requires_grad=True)
    z = x
    for _ in range(5000):
        z = ad.add(z, 0.0)
    backward(z)
    assert x.grad == 1.0
