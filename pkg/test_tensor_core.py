#!/usr/bin/env python3
"""
Tests for the tensor engine: forward values, shape errors and finite-difference gradients
"""

import numpy as np
import pytest

from errors import ContractError, DimensionError, NumericError
from gradient_check import check_gradients, probe_loss, relative_error
from tensor_core import (
    Graph,
    ParameterSet,
    Tensor,
    add,
    backward,
    batchnorm2d,
    bias_add,
    concat,
    conv2d,
    conv2d_transpose,
    default_dtype,
    float64_shadow,
    l2_norm,
    leaky_relu,
    matmul,
    maxpool2d,
    mean,
    mul,
    relu,
    reshape,
    row_slice,
    scale,
    sub,
    tanh,
    tensor_sum,
    transpose,
)

TOLERANCE = 1e-5


def spaced(rng, shape, gap=0.1):
    """Distinct values at least `gap` apart and away from zero, so kinks are never crossed"""
    n = int(np.prod(shape))
    values = (rng.permutation(n) - n / 2.0 + 0.5) * gap
    return values.reshape(shape)


def test_elementwise_values():
    a = Tensor([1.0, 2.0, 3.0])
    b = Tensor([4.0, 5.0, 6.0])
    np.testing.assert_allclose((a + b).data, [5, 7, 9])
    np.testing.assert_allclose((a - b).data, [-3, -3, -3])
    np.testing.assert_allclose((a * b).data, [4, 10, 18])
    np.testing.assert_allclose(scale(a, 2.0).data, [2, 4, 6])
    np.testing.assert_allclose(relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])
    np.testing.assert_allclose(leaky_relu(Tensor([-1.0, 2.0]), 0.2).data, [-0.2, 2.0])


def test_shape_mismatch_raises_dimension_error():
    with pytest.raises(DimensionError):
        add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((2, 5, 5))), Tensor(np.ones((1, 3, 3, 3))))


def test_default_dtype_and_shadow():
    assert default_dtype() == np.float32
    assert Tensor([1.0]).data.dtype == np.float32
    with float64_shadow():
        assert Tensor([1.0]).data.dtype == np.float64
    assert default_dtype() == np.float32


def test_relu_gradient_is_zero_at_zero():
    x = Tensor([-1.0, 0.0, 1.0], requires_grad=True)
    backward(tensor_sum(relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_gradient_accumulates_over_shared_inputs():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    backward(tensor_sum(add(mul(x, x), x)))
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(mul(x, x))
    with pytest.raises(ContractError):
        backward(Tensor(1.0))


def test_graph_orders_inputs_before_outputs():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = tanh(x)
    loss = tensor_sum(mul(y, y))
    nodes = Graph.from_root(loss).nodes
    assert nodes[-1] is loss
    assert nodes.index(x) < nodes.index(y)


def test_item_and_check_finite():
    assert Tensor([3.5]).item() == 3.5
    with pytest.raises(ContractError):
        Tensor([1.0, 2.0]).item()
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan]).check_finite('probe')


def test_conv2d_known_value():
    x = Tensor(np.ones((1, 3, 3)))
    k = Tensor(np.ones((1, 1, 3, 3)))
    out = conv2d(x, k)
    assert out.shape == (1, 1, 1)
    assert out.item() == 9.0
    same = conv2d(x, k, pad=1)
    np.testing.assert_allclose(same.data[0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


def test_conv_transpose_output_extent():
    x = Tensor(np.ones((2, 3, 4, 4)))
    k = Tensor(np.ones((3, 5, 4, 4)))
    assert conv2d_transpose(x, k, stride=2, pad=1).shape == (2, 5, 8, 8)


def test_conv_transpose_is_adjoint_of_conv():
    rng = np.random.default_rng(3)
    with float64_shadow():
        x = Tensor(rng.standard_normal((2, 3, 8, 8)))
        w = Tensor(rng.standard_normal((4, 3, 4, 4)))
        y = Tensor(rng.standard_normal((2, 4, 4, 4)))
        forward = conv2d(x, w, stride=2, pad=1)
        assert forward.shape == y.shape
        adjoint = conv2d_transpose(y, w, stride=2, pad=1)
        assert adjoint.shape == x.shape
        lhs = float(np.sum(forward.data * y.data))
        rhs = float(np.sum(x.data * adjoint.data))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_maxpool_routes_ties_to_first_maximum():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    backward(tensor_sum(maxpool2d(x, 2)))
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


def test_batchnorm_eval_uses_running_statistics():
    x = Tensor(np.arange(8, dtype=np.float64).reshape(1, 2, 2, 2))
    gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
    running_mean, running_var = Tensor(np.array([1.0, 2.0])), Tensor(np.array([4.0, 9.0]))
    out = batchnorm2d(x, gamma, beta, eps=1e-5, training=False, running_mean=running_mean, running_var=running_var)
    expected_c0 = (x.data[0, 0] - 1.0) / np.sqrt(4.0 + 1e-5)
    np.testing.assert_allclose(out.data[0, 0], expected_c0, rtol=1e-5)
    with pytest.raises(ContractError):
        batchnorm2d(x, gamma, beta, training=False)


def test_batchnorm_training_updates_running_statistics():
    x = Tensor(np.random.default_rng(0).standard_normal((4, 2, 3, 3)))
    running_mean, running_var = Tensor(np.zeros(2)), Tensor(np.ones(2))
    batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), training=True,
                running_mean=running_mean, running_var=running_var)
    np.testing.assert_allclose(running_mean.data, 0.1 * x.data.mean(axis=(0, 2, 3)), rtol=1e-4, atol=1e-6)
    assert not np.allclose(running_var.data, 1.0)


def test_l2_norm_zero_vector_has_zero_gradient():
    v = Tensor(np.zeros(3), requires_grad=True)
    backward(l2_norm(v))
    np.testing.assert_array_equal(v.grad, np.zeros(3))


@pytest.mark.parametrize('seed', range(20))
def test_dense_ops_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    with float64_shadow():
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        bias = Tensor(rng.standard_normal(2), requires_grad=True)

        def fn():
            h = tanh(bias_add(matmul(a, b), bias, axis=1))
            return probe_loss(transpose(reshape(h, (2, 3))), seed)

        errors = check_gradients(fn, {'a': a, 'b': b, 'bias': bias})
    assert max(errors.values()) < TOLERANCE


@pytest.mark.parametrize('seed', range(20))
def test_conv_family_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    with float64_shadow():
        x = Tensor(rng.standard_normal((2, 2, 6, 6)), requires_grad=True)
        k = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
        kt = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)

        def conv_fn():
            return probe_loss(conv2d(x, k, stride=1, pad=1), seed)

        def strided_fn():
            return probe_loss(conv2d(x, k, stride=2, pad=0), seed)

        def transpose_fn():
            return probe_loss(conv2d_transpose(x, kt, stride=2, pad=1), seed)

        errors = {}
        errors.update(check_gradients(conv_fn, {'x': x, 'k': k}))
        errors.update({f"strided_{n}": e for n, e in check_gradients(strided_fn, {'x': x, 'k': k}).items()})
        errors.update({f"transpose_{n}": e for n, e in check_gradients(transpose_fn, {'x': x, 'kt': kt}).items()})
    assert max(errors.values()) < TOLERANCE


@pytest.mark.parametrize('seed', range(20))
def test_pool_and_relu_match_finite_differences(seed):
    rng = np.random.default_rng(200 + seed)
    with float64_shadow():
        x = Tensor(spaced(rng, (2, 2, 4, 4)), requires_grad=True)

        def fn():
            return probe_loss(maxpool2d(relu(x), 2), seed)

        errors = check_gradients(fn, {'x': x})
    assert errors['x'] < TOLERANCE


@pytest.mark.parametrize('seed', range(20))
def test_batchnorm_matches_finite_differences(seed):
    rng = np.random.default_rng(300 + seed)
    with float64_shadow():
        x = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
        gamma = Tensor(1.0 + 0.1 * rng.standard_normal(2), requires_grad=True)
        beta = Tensor(0.1 * rng.standard_normal(2), requires_grad=True)

        def fn():
            return probe_loss(batchnorm2d(x, gamma, beta, training=True), seed)

        errors = check_gradients(fn, {'x': x, 'gamma': gamma, 'beta': beta})
    assert max(errors.values()) < TOLERANCE


@pytest.mark.parametrize('seed', range(20))
def test_plumbing_ops_match_finite_differences(seed):
    rng = np.random.default_rng(400 + seed)
    with float64_shadow():
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 3)), requires_grad=True)

        def fn():
            stacked = concat([a, b], axis=0)
            top = row_slice(stacked, 1, 4)
            rows = l2_norm(sub(top, scale(top, 0.5)), axis=-1)
            return add(mean(rows), l2_norm(stacked))

        errors = check_gradients(fn, {'a': a, 'b': b})
    assert max(errors.values()) < TOLERANCE


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)


def test_parameter_set_bookkeeping():
    params = ParameterSet()
    params.add('w', Tensor(np.ones((2, 3)), requires_grad=True))
    params.add('running', Tensor(np.zeros(3)))
    with pytest.raises(ContractError):
        params.add('w', Tensor(np.ones(1)))
    assert params.count() == 6
    assert params.count(trainable_only=False) == 9
    assert [name for name, _ in params.trainable_items()] == ['w']

    twin = params.clone()
    assert twin.bit_equal(params)
    twin['w'].data[0, 0] = 5.0
    assert not twin.bit_equal(params)
    assert params['w'].data[0, 0] == 1.0
