import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ckd.engine import ops
from ckd.engine.gradcheck import REGISTRY, grad_check, numerical_grad
from ckd.engine.optim import Adam
from ckd.engine.tensor import Parameter, ShapeError, Tensor, is_grad_enabled, no_grad

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_sum_gradient_is_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ops.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))
    # dyadic inputs keep x +/- h exact, so the check is at roundoff level
    assert grad_check(lambda t: ops.sum(t), [1.0, 2.0, 3.0]) <= 1e-12


def test_matmul_example():
    a = Tensor(np.eye(2), requires_grad=True)
    b = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    out = ops.matmul(a, b)
    np.testing.assert_array_equal(out.data, b.data)
    ops.sum(out).backward()
    np.testing.assert_array_equal(a.grad, [[3.0, 7.0], [3.0, 7.0]])
    np.testing.assert_array_equal(b.grad, np.ones((2, 2)))


def test_relu_subgradient_at_zero():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    ops.sum(ops.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_shape_errors():
    with pytest.raises(ShapeError) as ei:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert ei.value.shapes == ((2, 3), (2, 3))
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 1, 3, 3))))


def test_backward_accumulates_shared_use():
    x = Tensor([2.0], requires_grad=True)
    y = ops.mul(x, x)  # x used twice
    ops.sum(ops.add(y, x)).backward()
    np.testing.assert_allclose(x.grad, [5.0])


def test_graph_freed_after_backward():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = ops.sum(ops.mul(x, x))
    y.backward()
    assert y._parents == ()


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = ops.mul(x, 3.0)
    assert is_grad_enabled()
    assert not y.requires_grad


def test_grad_check_rejects_vector_output():
    with pytest.raises(ValueError):
        grad_check(lambda t: ops.mul(t, 2.0), [1.0, 2.0])


def test_numerical_grad_of_quadratic():
    g = numerical_grad(lambda t: ops.sum(ops.mul(t, t)), np.array([0.5, -1.0]))
    np.testing.assert_allclose(g, [1.0, -2.0], atol=1e-9)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registry_case(name):
    f, x = REGISTRY[name](np.random.default_rng(3))
    assert grad_check(f, x) <= 1e-4


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite),
       arrays(np.float64, st.integers(1, 4), elements=finite))
def test_broadcast_add_gradients_sum_over_expanded_axes(a, b):
    if a.shape[1] != b.shape[0]:
        b = np.resize(b, a.shape[1])
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ops.sum(ops.add(ta, tb)).backward()
    np.testing.assert_array_equal(ta.grad, np.ones_like(a))
    np.testing.assert_array_equal(tb.grad, np.full(b.shape, a.shape[0]))


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = ops.softmax(Tensor(x)).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.exp(ops.log_softmax(Tensor(x)).data), s, rtol=1e-10, atol=1e-300)


def test_conv2d_matches_direct_loop(rng):
    x = rng.normal(size=(2, 3, 5, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 5, 6))
    for i in range(5):
        for j in range(6):
            ref[:, :, i, j] = np.einsum("ncij,ocij->no", xp[:, :, i:i + 3, j:j + 3], w) + b
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_pools(rng):
    x = rng.normal(size=(1, 2, 4, 6))
    np.testing.assert_allclose(ops.avg_pool2d(Tensor(x), 2).data, x.reshape(1, 2, 2, 2, 3, 2).mean(axis=(3, 5)))
    np.testing.assert_array_equal(ops.max_pool2d(Tensor(x), 2).data, x.reshape(1, 2, 2, 2, 3, 2).max(axis=(3, 5)))


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -2.0]), "w")
    opt = Adam([p], lr=0.1)
    p.grad = np.array([3.0, -0.5])
    before = p.data
    opt.step()
    np.testing.assert_allclose(p.data, before - 0.1 * np.sign([3.0, -0.5]), rtol=1e-6)
    assert p.version == 1
    assert before is not p.data  # replaced, never mutated


def test_adam_skips_frozen_and_gradless():
    a = Parameter(np.ones(2), "a")
    b = Parameter(np.ones(2), "b")
    b.requires_grad = False
    b.grad = np.ones(2)
    Adam([a, b]).step()
    np.testing.assert_array_equal(a.data, np.ones(2))
    np.testing.assert_array_equal(b.data, np.ones(2))
    with pytest.raises(ValueError):
        Adam([Parameter(np.ones(1), "x"), Parameter(np.ones(1), "x")])


def test_adam_minimises_quadratic():
    p = Parameter(np.array([3.0, -4.0]), "p")
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        ops.sum(ops.mul(p, p)).backward()
        opt.step()
    assert np.abs(p.data).max() < 1e-2


def test_numpy_fallback_selected_by_env_flag():
    code = ("from ckd._accel import backend; from ckd import kernels as K; "
            "print(backend(), K.lif_forward is K.lif_forward_numpy)")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={"CKD_DISABLE_NUMBA": "1", "PATH": ""}).stdout.split()
    assert out == ["numpy", "True"]
