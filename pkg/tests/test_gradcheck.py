import itertools

import numpy as np
import pytest

from vsrn import tensor as T
from vsrn.gradcheck import DeterminismError, grad_check, numeric_gradient
from vsrn.tensor import Tensor


def test_square_at_three():
    x = Tensor(3.0, requires_grad=True)
    assert abs(numeric_gradient(lambda: x * x, x, 1e-5) - 6.0) < 1e-9
    assert grad_check(lambda: x * x, [x], eps=1e-5) < 1e-8


def test_constant_function():
    x = Tensor([1.0, -2.0], requires_grad=True)
    assert grad_check(lambda: T.sum(x * 0.0) + 4.0, [x]) == 0.0


def test_nondeterministic_function_rejected():
    x = Tensor(1.0, requires_grad=True)
    counter = itertools.count()
    with pytest.raises(DeterminismError):
        grad_check(lambda: x * float(next(counter)), [x])


def test_bad_eps():
    x = Tensor(1.0, requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x * x, [x], eps=0.0)


def test_params_restored_and_grads_preserved():
    x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
    x.grad = np.array([5.0, 6.0])
    before = x.values.copy()
    grad_check(lambda: T.sum(T.tanh(x)), [x])
    np.testing.assert_array_equal(x.values, before)
    np.testing.assert_array_equal(x.grad, [5.0, 6.0])
