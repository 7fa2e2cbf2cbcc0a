import numpy as np
import pytest

from nowcast.errors import ShapeMismatchError
from nowcast.optim import finite_diff_check
from nowcast.tensor import (
    ConvSpec,
    add,
    conv2d_backward,
    conv2d_forward,
    elementwise_map,
    leaky_relu,
    mul,
    reduce,
    sigmoid,
    tanh,
)

from oracles import naive_conv2d


# ---------------------------------------------------------------------------
# elementwise


def test_sigmoid_of_zero_is_half():
    assert np.allclose(sigmoid(np.zeros((3, 4))), 0.5)


def test_leaky_relu_scales_negative_branch():
    out = leaky_relu(np.array([-1.0, 0.0, 2.0]), alpha=0.3)
    np.testing.assert_allclose(out, [-0.3, 0.0, 2.0])


def test_tanh_at_atanh_half():
    # tanh(ln(3)/2) == 0.5 exactly
    np.testing.assert_allclose(tanh(np.array([np.log(3.0) / 2.0])), [0.5], atol=1e-12)


def test_binary_op_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeMismatchError, match=r"\(2, 3\).*\(3, 2\)"):
        add(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeMismatchError):
        mul(np.zeros(2), np.zeros(3))


def test_elementwise_map_dispatch():
    x = np.array([-2.0, 0.0, 2.0])
    np.testing.assert_allclose(elementwise_map("sigmoid", x), sigmoid(x))
    np.testing.assert_allclose(elementwise_map("scale", x, 2.0), x * 2)
    with pytest.raises(ValueError):
        elementwise_map("nonesuch", x)


def test_sigmoid_tanh_ranges(rng):
    # strict bounds wherever float64 can represent them (|x| <= 30)
    x = rng.uniform(-15, 15, size=1000)
    s, t = sigmoid(x), tanh(x)
    assert np.all((s > 0) & (s < 1))
    assert np.all((t > -1) & (t < 1))
    # extreme inputs saturate to the closed bounds, never beyond
    ext = np.array([-1e6, -100.0, 100.0, 1e6])
    assert np.all((sigmoid(ext) >= 0) & (sigmoid(ext) <= 1))
    assert np.all((tanh(ext) >= -1) & (tanh(ext) <= 1))


def test_sigmoid_no_overflow_for_large_negative():
    out = sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(out))


# ---------------------------------------------------------------------------
# reduce


def test_reduce_mean():
    assert reduce(np.array([1.0, 2.0, 3.0, 6.0]), {0}, "mean") == pytest.approx(3.0)


def test_reduce_variance_of_constant_is_zero():
    out = reduce(np.full((3, 4), 7.5), {0, 1}, "variance")
    assert out == pytest.approx(0.0)


def test_reduce_sum_removes_axis():
    out = reduce(np.ones((2, 3)), {0}, "sum")
    assert out.shape == (3,)
    np.testing.assert_allclose(out, 2.0)


def test_reduce_empty_axes_is_identity():
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(reduce(x, set(), "sum"), x)


def test_reduce_axis_out_of_range():
    with pytest.raises(ValueError, match="axis"):
        reduce(np.ones((2, 3)), {2}, "mean")


# ---------------------------------------------------------------------------
# conv2d forward


def test_conv_identity_kernel():
    x = np.random.default_rng(0).random((2, 3, 5, 4))
    spec = ConvSpec(3, 3, 1, 1)
    kernels = np.eye(3).reshape(3, 3, 1, 1)
    out = conv2d_forward(x, spec, kernels, np.zeros(3))
    np.testing.assert_allclose(out, x)


def test_conv_zero_input_gives_bias():
    spec = ConvSpec(2, 3, 3, 3)
    kernels = np.random.default_rng(1).random((3, 2, 3, 3))
    bias = np.array([1.0, -2.0, 0.5])
    out = conv2d_forward(np.zeros((1, 2, 4, 4)), spec, kernels, bias)
    for c in range(3):
        np.testing.assert_allclose(out[0, c], bias[c])


def test_conv_matches_naive_loop(rng):
    x = rng.random((1, 1, 6, 6))
    spec = ConvSpec(1, 2, 3, 3)
    kernels = rng.normal(size=(2, 1, 3, 3))
    bias = rng.normal(size=2)
    got = conv2d_forward(x, spec, kernels, bias)
    want = naive_conv2d(x, kernels, bias)
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_conv_linearity_and_shape_preservation(rng):
    spec = ConvSpec(2, 3, 5, 3)
    kernels = rng.normal(size=(3, 2, 5, 3))
    zero_b = np.zeros(3)
    x1, x2 = rng.normal(size=(2, 2, 7, 9)), rng.normal(size=(2, 2, 7, 9))
    lhs = conv2d_forward(2.0 * x1 - 3.0 * x2, spec, kernels, zero_b)
    rhs = 2.0 * conv2d_forward(x1, spec, kernels, zero_b) - 3.0 * conv2d_forward(x2, spec, kernels, zero_b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)
    assert lhs.shape == (2, 3, 7, 9)


def test_conv_shape_errors():
    spec = ConvSpec(2, 3, 3, 3)
    kernels = np.zeros((3, 2, 3, 3))
    with pytest.raises(ShapeMismatchError, match="channel"):
        conv2d_forward(np.zeros((1, 4, 5, 5)), spec, kernels, np.zeros(3))
    with pytest.raises(ShapeMismatchError, match="kernel"):
        conv2d_forward(np.zeros((1, 2, 5, 5)), spec, np.zeros((3, 2, 5, 5)), np.zeros(3))
    with pytest.raises(ShapeMismatchError, match="bias"):
        conv2d_forward(np.zeros((1, 2, 5, 5)), spec, kernels, np.zeros(4))
    with pytest.raises(ValueError, match="odd"):
        ConvSpec(1, 1, 2, 3)


# ---------------------------------------------------------------------------
# conv2d backward


def test_conv_backward_zero_upstream(rng):
    spec = ConvSpec(2, 2, 3, 3)
    x = rng.normal(size=(1, 2, 4, 4))
    kernels = rng.normal(size=(2, 2, 3, 3))
    dx, dk, db = conv2d_backward(x, spec, kernels, np.zeros((1, 2, 4, 4)))
    assert not dx.any() and not dk.any() and not db.any()


def test_conv_backward_identity_kernel(rng):
    spec = ConvSpec(1, 1, 1, 1)
    x = rng.normal(size=(2, 1, 3, 3))
    g = rng.normal(size=(2, 1, 3, 3))
    dx, _, _ = conv2d_backward(x, spec, np.ones((1, 1, 1, 1)), g)
    np.testing.assert_allclose(dx, g)


def test_conv_backward_matches_finite_differences(rng):
    spec = ConvSpec(2, 3, 3, 3)
    x = rng.normal(size=(2, 2, 5, 4))
    kernels = rng.normal(size=(3, 2, 3, 3))
    bias = rng.normal(size=3)
    proj = rng.normal(size=(2, 3, 5, 4))  # fixed projection to a scalar

    dx, dk, db = conv2d_backward(x, spec, kernels, proj)

    err = finite_diff_check(
        lambda v: float(np.sum(conv2d_forward(v, spec, kernels, bias) * proj)), x, dx, h=1e-3
    )
    assert err <= 1e-4
    err = finite_diff_check(
        lambda v: float(np.sum(conv2d_forward(x, spec, v, bias) * proj)), kernels, dk, h=1e-3
    )
    assert err <= 1e-4
    err = finite_diff_check(
        lambda v: float(np.sum(conv2d_forward(x, spec, kernels, v) * proj)), bias, db, h=1e-3
    )
    assert err <= 1e-4


def test_conv_backward_upstream_shape_error(rng):
    spec = ConvSpec(1, 1, 3, 3)
    with pytest.raises(ShapeMismatchError, match="upstream"):
        conv2d_backward(np.zeros((1, 1, 4, 4)), spec, np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 5, 5)))
