"""Unit tests for the reverse-mode engine and its primitives."""

import numpy as np
import pytest

from ganids import autodiff as ad


def test_add_mul_scalars():
    x = ad.leaf(np.array(3.0))
    y = ad.leaf(np.array(4.0))
    z = x * y + x
    assert z.item() == 15.0
    gx, gy = ad.grad(z, [x, y])
    assert gx.item() == 5.0  # y + 1
    assert gy.item() == 3.0


def test_broadcast_add_gradient():
    x = ad.leaf(np.ones((3, 2)))
    b = ad.leaf(np.array([1.0, 2.0]))
    s = ad.sum_(x + b)
    gx, gb = ad.grad(s, [x, b])
    assert np.array_equal(gx.data, np.ones((3, 2)))
    assert np.array_equal(gb.data, np.array([3.0, 3.0]))


def test_matmul_gradient_matches_manual():
    rng = np.random.default_rng(1)
    a = ad.leaf(rng.standard_normal((2, 3)))
    b = ad.leaf(rng.standard_normal((3, 4)))
    s = ad.sum_(a @ b)
    ga, gb = ad.grad(s, [a, b])
    ones = np.ones((2, 4))
    assert np.allclose(ga.data, ones @ b.data.T)
    assert np.allclose(gb.data, a.data.T @ ones)


def test_matmul_rejects_non_2d():
    with pytest.raises(ad.ShapeMismatch):
        ad.matmul(ad.leaf(np.ones(3)), ad.leaf(np.ones((3, 2))))


def test_grad_requires_scalar_output():
    x = ad.leaf(np.ones(3))
    with pytest.raises(ad.ShapeMismatch):
        ad.grad(x, [x])


def test_tanh_at_zero_has_unit_slope():
    x = ad.leaf(np.zeros(4))
    (g,) = ad.grad(ad.sum_(ad.tanh(x)), [x])
    assert np.allclose(g.data, 1.0)


def test_leaky_relu_values_and_grad():
    x = ad.leaf(np.array([-1.0, 2.0]))
    y = ad.leaky_relu(x, 0.2)
    assert np.allclose(y.data, [-0.2, 2.0])
    (g,) = ad.grad(ad.sum_(y), [x])
    assert np.allclose(g.data, [0.2, 1.0])


def test_safe_recip_zero_is_zero_with_zero_grad():
    x = ad.leaf(np.array([0.0, 2.0]))
    y = ad.safe_recip(x)
    assert np.allclose(y.data, [0.0, 0.5])
    (g,) = ad.grad(ad.sum_(y), [x])
    assert g.data[0] == 0.0
    assert np.isclose(g.data[1], -0.25)


def test_sqrt_zero_gradient_defined_as_zero():
    x = ad.leaf(np.array([0.0, 4.0]))
    (g,) = ad.grad(ad.sum_(ad.sqrt(x)), [x])
    assert g.data[0] == 0.0
    assert np.isclose(g.data[1], 0.25)


def test_sum_axis_keepdims_gradient():
    x = ad.leaf(np.arange(6.0).reshape(2, 3))
    s = ad.sum_(ad.mul(ad.sum_(x, axis=1), np.array([1.0, 2.0])))
    (g,) = ad.grad(s, [x])
    assert np.array_equal(g.data, np.array([[1.0] * 3, [2.0] * 3]))


def test_mean_gradient():
    x = ad.leaf(np.ones((2, 5)))
    (g,) = ad.grad(ad.mean(x), [x])
    assert np.allclose(g.data, 0.1)


def test_unfold_fold_are_adjoint():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 5))
    y = rng.standard_normal((2, 5, 9))
    # <unfold(x), y> == <x, fold(y)> for exact adjoints
    ux = ad.unfold1d(ad.leaf(x), 3, 1).data
    fy = ad.fold1d(ad.leaf(y), 3, 1, 3, 5).data
    assert np.isclose(np.sum(ux * y), np.sum(x * fy))


def test_second_order_gradient_simple():
    # d/dx of (dy/dx) for y = x^3: first grad 3x^2, second 6x
    x = ad.leaf(np.array(2.0))
    y = ad.mul(ad.mul(x, x), x)
    (g1,) = ad.grad(y, [x], create_graph=True)
    assert np.isclose(g1.item(), 12.0)
    (g2,) = ad.grad(g1, [x])
    assert np.isclose(g2.item(), 12.0)


def test_grad_without_create_graph_detaches():
    x = ad.leaf(np.array(2.0))
    y = ad.mul(x, x)
    (g1,) = ad.grad(y, [x])
    (g2,) = ad.grad(ad.sum_(g1), [x])
    assert g2.item() == 0.0


def test_check_finite_raises():
    with pytest.raises(ad.NonFiniteValue):
        ad.check_finite(np.array([1.0, np.nan]))


def test_unreachable_wrt_gets_zeros():
    x = ad.leaf(np.ones(3))
    other = ad.leaf(np.ones(2))
    (g,) = ad.grad(ad.sum_(x), [other])
    assert np.array_equal(g.data, np.zeros(2))
