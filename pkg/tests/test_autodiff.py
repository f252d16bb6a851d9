import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e3marl import autodiff as ad
from e3marl.errors import InvalidArgumentError, ShapeError

from fd_oracle import CASES, REL_TOL, check_op


def test_matmul_identity():
    x = np.array([[1.0, 2], [3, 4]])
    assert np.array_equal(ad.matmul(x, np.eye(2)).data, x)


def test_sum():
    assert ad.sum_(np.array([1.0, 2, 3])).item() == 6.0


def test_scatter_duplicate_rows_doubles():
    r = np.array([[1.0, -2.0]])
    out = ad.scatter_add_rows(np.vstack([r, r]), [0, 0], 2).data
    assert np.array_equal(out, [[2.0, -4.0], [0, 0]])


def test_square_gradient():
    x = ad.Parameter(3.0)
    ad.backward(x * x)
    assert x.grad == 6.0


def test_sum_product_gradient():
    rng = np.random.default_rng(0)
    A, B = ad.Parameter(rng.standard_normal((3, 4))), rng.standard_normal((3, 4))
    ad.backward(ad.sum_(A * B))
    assert np.array_equal(A.grad, B)


def test_backward_accumulates_and_resets():
    x = ad.Parameter(np.array([1.0, 2.0]))
    ad.backward(ad.sum_(x * x))
    ad.backward(ad.sum_(x * x))
    assert np.array_equal(x.grad, [4.0, 8.0])
    x.zero_grad()
    assert np.array_equal(x.grad, [0.0, 0.0])


def test_backward_needs_scalar():
    with pytest.raises(InvalidArgumentError):
        ad.backward(ad.Parameter(np.ones(2)) * 2.0)


def test_shape_errors_name_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(np.ones((2, 3)), np.ones((4, 5)))
    with pytest.raises(ShapeError):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeError):
        ad.gather_rows(np.ones((2, 3)), [2])
    with pytest.raises(ShapeError):
        ad.scatter_add_rows(np.ones((2, 3)), [0], 3)
    with pytest.raises(ShapeError):
        ad.reshape(np.ones(4), (3,))


def test_no_grad_records_nothing():
    x = ad.Parameter(np.ones(3))
    with ad.no_grad():
        y = ad.sum_(x * x)
    assert not y.requires_grad and y.is_leaf
    assert ad.is_recording()


def test_relu_subgradient_zero_at_kink():
    x = ad.Parameter(np.array([0.0, 1.0, -1.0]))
    ad.backward(ad.sum_(ad.relu(x)))
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_l2_norm_finite_at_origin():
    x = ad.Parameter(np.zeros((2, 3)))
    n = ad.l2_norm_rows(x)
    assert np.allclose(n.data, np.sqrt(ad.EPS_NORM))
    ad.backward(ad.sum_(n))
    assert np.all(np.isfinite(x.grad)) and np.array_equal(x.grad, np.zeros((2, 3)))


def test_shared_subexpression_gradient():
    x = ad.Parameter(2.0)
    y = x * x
    ad.backward(y * y + y)  # x^4 + x^2
    assert np.isclose(x.grad, 4 * 8 + 2 * 2)


def test_every_op_has_an_oracle_case():
    assert set(CASES) == set(ad.OPS)


@pytest.mark.parametrize("name", ad.OPS)
def test_finite_difference_oracle(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(5):
        assert check_op(name, rng) < REL_TOL


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_backward_is_linear_in_the_loss(seed):
    rng = np.random.default_rng(seed)
    W = ad.Parameter(rng.standard_normal((4, 3)))
    x = rng.standard_normal((5, 4))

    def f1():
        return ad.sum_(ad.tanh(ad.matmul(x, W)))

    def f2():
        return ad.mean(ad.sigmoid(ad.matmul(x, W)) * 3.0)

    ad.backward(f1())
    g1 = W.grad.copy()
    W.zero_grad()
    ad.backward(f2())
    g2 = W.grad.copy()
    W.zero_grad()
    ad.backward(f1() + f2())
    assert np.allclose(W.grad, g1 + g2, atol=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_gather_scatter_adjoint(seed):
    rng = np.random.default_rng(seed)
    n, k = 6, 10
    idx = rng.integers(0, n, k)
    x, y = rng.standard_normal((k, 3)), rng.standard_normal((n, 3))
    lhs = np.sum(ad.scatter_add_rows(x, idx, n).data * y)
    rhs = np.sum(x * ad.gather_rows(y, idx).data)
    assert np.isclose(lhs, rhs, atol=1e-12)


def test_ndarray_on_the_left_dispatches_to_tensor():
    x = ad.Parameter(np.ones(3))
    y = np.array([1.0, 2.0, 3.0]) * x
    assert isinstance(y, ad.Tensor) and y.requires_grad


def test_parameter_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    params = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal(4)}
    ad.save_parameters(tmp_path / "p.npz", params)
    back = ad.load_parameters(tmp_path / "p.npz")
    assert set(back) == set(params)
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()
