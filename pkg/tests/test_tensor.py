import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uconv import tensor as T
from uconv.gradcheck import check, numeric_grad
from uconv.tensor import ContractError, DimensionError, Tensor

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def leaf(a):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=True)


def test_matmul_grad_worked_example():
    a = leaf([[1.0, 2.0], [3.0, 4.0]])
    b = leaf([[1.0], [-1.0]])
    T.sum(T.matmul(a, b)).backward()
    np.testing.assert_array_equal(a.grad, [[1.0, -1.0], [1.0, -1.0]])
    np.testing.assert_array_equal(b.grad, [[4.0], [6.0]])


def test_backward_requires_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(ContractError):
        T.square(x).backward()


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        T.add(leaf([1.0, 2.0]), leaf([1.0, 2.0, 3.0]))
    with pytest.raises(DimensionError):
        T.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))


def test_no_grad_records_nothing():
    x = leaf([1.0, 2.0])
    with T.no_grad():
        y = T.sum(T.square(x))
    assert y.is_leaf and not y.requires_grad


def test_shared_subexpression_accumulates():
    # y = x*x + x*x reuses x four times; dy/dx = 4x
    x = leaf([1.5, -2.0])
    sq = T.mul(x, x)
    T.sum(T.add(sq, sq)).backward()
    np.testing.assert_allclose(x.grad, 4 * x.data)


@given(arrays(np.float64, (3, 2), elements=finite))
def test_double_backward_doubles_leaf_grads(a):
    x = leaf(a)
    f = lambda: T.sum(T.tanh(T.mul(x, x)))  # noqa: E731
    f().backward()
    once = x.grad.copy()
    f().backward()
    np.testing.assert_allclose(x.grad, 2 * once, rtol=0, atol=1e-15)


@given(arrays(np.float64, (4,), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_add_mul_grads_match_closed_form(a, b):
    x, y = leaf(a), leaf(b)
    T.sum(T.add(T.mul(x, y), x)).backward()
    np.testing.assert_allclose(x.grad, b + 1.0)
    np.testing.assert_allclose(y.grad, a)


@given(arrays(np.float64, (5,), elements=st.floats(-40, 40)))
def test_sigmoid_is_stable_and_bounded(a):
    s = T.sigmoid(leaf(a)).data
    assert np.all(np.isfinite(s)) and np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(s, 0.5 * (1 + np.tanh(a / 2)), atol=1e-15)


def test_cross_entropy_is_stable_for_large_logits():
    logits = leaf([[1000.0, 0.0, -1000.0]])
    loss = T.cross_entropy_logits(logits, np.array([0]))
    assert loss.item() == pytest.approx(0.0, abs=1e-12)
    loss.backward()
    assert np.all(np.isfinite(logits.grad))


def test_cross_entropy_uniform_value():
    loss = T.cross_entropy_logits(leaf(np.zeros((2, 4))), np.array([1, 3]))
    assert loss.item() == pytest.approx(np.log(4.0))


def test_gelu_uses_tanh_form():
    x = np.linspace(-3, 3, 7)
    want = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(T.gelu(leaf(x)).data, want, rtol=1e-15)


def test_window_matmul_matches_dense():
    rng = np.random.default_rng(0)
    x = leaf(rng.normal(size=(2, 5)))
    w = leaf(rng.normal(size=4))
    rows, cols = np.array([0, 0, 2, 2]), np.array([1, 4, 0, 1])
    dense = np.zeros((3, 5))
    np.add.at(dense, (rows, cols), w.data)
    np.testing.assert_allclose(T.window_matmul(x, w, rows, cols, 3).data, x.data @ dense.T)


def test_window_matmul_repeated_pairs_accumulate():
    x = leaf([[1.0, 2.0]])
    w = leaf([1.0, 3.0])
    out = T.window_matmul(x, w, np.array([0, 0]), np.array([1, 1]), 1)
    assert out.data[0, 0] == 8.0


def test_scale_by_tensor_grad():
    x, s = leaf([1.0, 2.0]), leaf(3.0)
    T.sum(T.scale(x, s)).backward()
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])
    assert s.grad == pytest.approx(3.0)


@pytest.mark.parametrize("op", [T.exp, T.tanh, T.sigmoid, T.gelu, T.elu, T.square])
def test_unary_ops_pass_finite_differences(op):
    x = leaf(np.random.default_rng(3).uniform(-1.5, 1.5, (2, 3)))
    assert check(lambda: T.sum(op(x)), [x]) < 1e-7


def test_numeric_grad_restores_input():
    x = leaf([0.3, -0.7])
    before = x.data.copy()
    numeric_grad(lambda: T.sum(T.square(x)), x)
    np.testing.assert_array_equal(x.data, before)


def test_take_with_repeats_scatters():
    x = leaf([1.0, 2.0, 3.0])
    T.sum(T.take(x, [0, 0, 2])).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])
