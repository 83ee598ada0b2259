import threading

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from recole import autodiff as ad
from recole.autodiff import NonFiniteError, ShapeError, Tensor

from oracles import fd_grad, grad_error


def check_op(build, *arrays, tol=1e-6):
    """Compare backward() against central differences for scalar sum_all(build(*tensors))."""
    ts = [Tensor(a, requires_grad=True) for a in arrays]

    def f():
        with ad.no_grad():
            return float(ad.sum_all(build(*ts)).item())

    loss = ad.sum_all(build(*ts))
    ad.backward(loss)
    for t in ts:
        g_fd = fd_grad(f, t.data)
        assert grad_error(t.grad, g_fd) < tol


R = np.random.default_rng(0)


def test_matmul_grad():
    check_op(ad.matmul, R.normal(size=(2, 3)), R.normal(size=(3, 4)))


def test_add_broadcast_grad():
    check_op(ad.add, R.normal(size=(3, 4)), R.normal(size=(1, 4)))
    check_op(ad.add, R.normal(size=(3, 4)), R.normal(size=(3, 4)))


def test_relu_grad_and_kink():
    x = R.normal(size=(3, 3))
    x[np.abs(x) < 0.1] = 0.5
    check_op(ad.relu, x)
    t = Tensor([[-1.0, 0.0, 2.0]], requires_grad=True)
    ad.backward(ad.sum_all(ad.relu(t)))
    assert t.grad.tolist() == [[0.0, 0.0, 1.0]]
    assert ad.relu(Tensor([[-1.0, 2.0]])).data.tolist() == [[0.0, 2.0]]


def test_structural_ops_grad():
    check_op(lambda a, b: ad.concat_rows(a, b), R.normal(size=(2, 3)), R.normal(size=(1, 3)))
    check_op(lambda a: ad.row(a, 1), R.normal(size=(3, 2)))
    check_op(lambda a: ad.rows(a, [2, 0, 2]), R.normal(size=(3, 2)))
    check_op(lambda a: ad.scale(ad.flatten(a), 3.0), R.normal(size=(2, 3)))
    check_op(lambda a: ad.reshape(a, (3, 2)), R.normal(size=(2, 3)))


def test_scalar_ops_grad():
    check_op(lambda a: ad.softplus(a), R.normal(size=(1, 1)) * 3)
    check_op(lambda a: ad.sigmoid(a), R.normal(size=(1, 1)))
    check_op(lambda a, b: ad.add_scalars([a, b, a]), R.normal(size=(1, 1)), R.normal(size=(1, 1)))
    check_op(lambda a, b, c: ad.logsumexp_over([a, b, c]), *(R.normal(size=(1, 1)) for _ in range(3)))


def test_cosine_grad():
    check_op(ad.cosine_sim, R.normal(size=(2, 3)), R.normal(size=(2, 3)))


def test_spmm_grad():
    S = sp.random(4, 3, density=0.5, random_state=1, format="csr")
    check_op(lambda x: ad.spmm(S, x), R.normal(size=(3, 2)))
    check_op(lambda x: ad.spmm(S, x, S.T.tocsr()), R.normal(size=(3, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cosine_identity(seed):
    u = Tensor(np.random.default_rng(seed).normal(size=(2, 5)))
    assert abs(ad.cosine_sim(u, u).item() - 1.0) < 1e-12


def test_cosine_zero_norm():
    with pytest.raises(ZeroDivisionError):
        ad.cosine_sim(Tensor(np.zeros((1, 3))), Tensor(np.ones((1, 3))))


def test_shapes():
    assert ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 1)))).shape == (2, 1)
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 1\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))
    with pytest.raises(ShapeError):
        ad.backward(ad.matmul(Tensor(np.ones((2, 3)), requires_grad=True), Tensor(np.ones((3, 1)))))


def test_nonfinite_raises():
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        ad.matmul(Tensor([[1e200]]), Tensor([[1e200]]))


def test_gradient_of_linear_sum():
    W = Tensor(R.normal(size=(3, 4)), requires_grad=True)
    x = R.normal(size=(4, 1))
    ad.backward(ad.sum_all(ad.matmul(W, Tensor(x))))
    assert np.allclose(W.grad, np.ones((3, 1)) @ x.T, atol=1e-15)


def test_accumulates_over_reuse():
    a = Tensor([[2.0]], requires_grad=True)
    ad.backward(ad.add(ad.scale(a, 3.0), ad.scale(a, 4.0)))
    assert a.grad.tolist() == [[7.0]]


def test_no_grad_records_nothing():
    a = Tensor([[1.0]], requires_grad=True)
    with ad.no_grad():
        out = ad.scale(a, 2.0)
    assert not out.requires_grad and not ad.current_tape().records


def test_tape_is_thread_local():
    seen = {}

    def work():
        a = Tensor([[1.0]], requires_grad=True)
        ad.scale(a, 2.0)
        seen["n"] = len(ad.current_tape().records)
        ad.current_tape().clear()

    before = len(ad.current_tape().records)
    th = threading.Thread(target=work)
    th.start()
    th.join()
    assert seen["n"] == 1 and len(ad.current_tape().records) == before
