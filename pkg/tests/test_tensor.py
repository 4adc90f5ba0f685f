import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reve import tensor as T
from reve.oracle import finite_difference_gradient
from reve.tensor import DomainError, ShapeError, Tape, TapeError, Tensor
from reve.verify import max_relative_error


def grad_of(fn, *arrays):
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
        tape.backward(out)
    return [leaf.grad for leaf in leaves]


def test_matmul_hand_example():
    out = T.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_sigmoid_at_zero():
    assert T.sigmoid(Tensor(0.0)).item() == 0.5


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        out = T.sigmoid(Tensor([-1000.0, 1000.0])).data
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_stop_gradient_is_value_identical_and_detached():
    x = Tensor([1.5, -2.0], requires_grad=True)
    with Tape() as tape:
        s = T.stop_gradient(x)
        assert s.tape_node is None
        np.testing.assert_array_equal(s.data, x.data)
        loss = T.sum(x * s)
        tape.backward(loss)
    # d/dx (x * const) = const, no contribution through s
    np.testing.assert_array_equal(x.grad, s.data)


@pytest.mark.parametrize("values, expected", [
    ([0.0, 0.0], math.log(2)),
    ([1000.0, 1000.0], 1000 + math.log(2)),
    ([0.0, 1.0, 2.0], math.log(1 + math.e + math.e ** 2)),
])
def test_logsumexp_examples(values, expected):
    assert T.logsumexp(Tensor(values)).item() == pytest.approx(expected, abs=1e-12)


def test_logsumexp_frozen_value():
    assert T.logsumexp(Tensor([0.0, 1.0, 2.0])).item() == pytest.approx(2.407606, abs=1e-6)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(-1e3, 1e3))
def test_logsumexp_shift_invariance(xs, c):
    x = np.array(xs)
    assert abs(T.logsumexp(Tensor(x + c)).item() - T.logsumexp(Tensor(x)).item() - c) <= 1e-12 * max(1, abs(c))


def test_backward_square_sum():
    (g,) = grad_of(lambda x: T.sum(x * x), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(g, [2, 4, 6])


def test_backward_sigmoid_at_zero():
    (g,) = grad_of(T.sigmoid, np.array(0.0))
    assert g == 0.25


def test_backward_twice_is_rejected():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.square(x))
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(TapeError, match="scalar"):
        tape.backward(y)


def test_backward_on_detached_loss():
    with pytest.raises(TapeError):
        T.backward(Tensor(1.0))


def test_no_recording_without_tape():
    x = Tensor([1.0], requires_grad=True)
    y = T.exp(x)
    assert y.tape_node is None


def test_gradients_accumulate_until_cleared():
    x = Tensor([2.0], requires_grad=True)
    for _ in range(2):
        with Tape() as tape:
            loss = T.sum(T.square(x))
            tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [8.0])


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_domain_errors():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.div(Tensor([1.0]), Tensor([0.0]))


def test_broadcast_gradient_sums_expanded_axes():
    gb, = grad_of(lambda b: T.sum(Tensor(np.ones((4, 3))) * b), np.ones((1, 3)))
    np.testing.assert_array_equal(gb, [[4, 4, 4]])


def test_slice_and_concat_gradients():
    def f(a, b):
        c = T.concat([a, b], axis=1)
        return T.sum(T.square(c[:, 1:3]))
    ga, gb = grad_of(f, np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]]))
    np.testing.assert_array_equal(ga, [[0, 4]])
    np.testing.assert_array_equal(gb, [[6, 0]])


# random op chains checked against central differences; the growing ops squash their
# input first so that arbitrary chains stay finite

UNARY = {
    "exp": lambda t: T.exp(T.tanh(t)),
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "square": lambda t: T.square(T.scale(T.tanh(T.scale(t, 0.5)), 2.0)),
    "log": lambda t: T.log(T.square(t) + 1.0),
    "lse": lambda t: T.logsumexp(t, axis=-1, keepdims=True) - t,
}
BINARY = {
    "add": T.add,
    "sub": T.sub,
    "mul": T.mul,
    "div": lambda a, b: T.div(a, T.square(b) + 0.5),
}


@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(1, 6), cols=st.integers(1, 6), inner=st.integers(1, 6),
    chain=st.lists(st.sampled_from(sorted(UNARY)), min_size=1, max_size=4),
    binop=st.sampled_from(sorted(BINARY)),
    broadcast=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_random_chain_matches_finite_differences(rows, cols, inner, chain, binop, broadcast, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(rows, inner))
    w = rng.normal(size=(inner, cols))
    b = rng.normal(size=(1, cols) if broadcast else (rows, cols))

    def f(a_, w_, b_):
        t = T.matmul(a_, w_)
        for name in chain:
            t = UNARY[name](t)
        t = BINARY[binop](t, b_)
        return T.mean(t)

    grads = grad_of(f, a, w, b)
    for i, arr in enumerate((a, w, b)):
        def scalar(theta, i=i):
            args = [Tensor(x) for x in (a, w, b)]
            args[i] = Tensor(theta)
            return f(*args).item()
        numeric = finite_difference_gradient(scalar, arr, 1e-5)
        assert max_relative_error(grads[i], numeric) <= 1e-4 or np.abs(grads[i] - numeric).max() <= 1e-9
