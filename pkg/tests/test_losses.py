import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ckd.engine import ops
from ckd.engine.gradcheck import grad_check
from ckd.engine.tensor import Parameter, ShapeError, Tensor
from ckd.losses import (
    CkdLossConfig, batched_linear_cka, cross_entropy, domain_alignment_loss, kd_loss, linear_cka, phase_switch,
    static_stream_loss, tet_loss, total_loss,
)
from ckd.spiking import TemporalActivations
from oracles import cka_hsic, ce_scalar, kl_scalar

matrices = st.tuples(st.integers(3, 9), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))


def _pair(n, p, q, seed):
    r = np.random.default_rng(seed)
    return r.normal(size=(n, p)), r.normal(size=(n, q))


def test_cka_spec_example_against_oracle():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    y = np.array([[1.0], [-1.0], [0.0]])
    expected = cka_hsic(x, y)
    assert expected == pytest.approx(1 / math.sqrt(10), abs=1e-15)
    assert linear_cka(x, y).item() == pytest.approx(expected, abs=1e-12)


@given(matrices)
def test_cka_matches_oracle_and_bounds(args):
    x, y = _pair(*args)
    v = linear_cka(x, y).item()
    assert v == pytest.approx(cka_hsic(x, y), abs=1e-10)
    assert -1e-12 <= v <= 1 + 1e-12


@given(matrices, st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3))
def test_cka_invariances(args, c):
    x, y = _pair(*args)
    base = linear_cka(x, y).item()
    q, _ = np.linalg.qr(np.random.default_rng(args[3]).normal(size=(x.shape[1], x.shape[1])))
    assert linear_cka(x @ q, y).item() == pytest.approx(base, abs=1e-8)
    assert linear_cka(x, c * y).item() == pytest.approx(base, abs=1e-8)
    perm = np.random.default_rng(args[3] + 1).permutation(len(x))
    assert linear_cka(x[perm], y[perm]).item() == pytest.approx(base, abs=1e-10)
    assert linear_cka(x, x).item() == pytest.approx(1.0, abs=1e-10)


def test_cka_degenerate_and_errors():
    x = np.ones((4, 3))
    assert linear_cka(x, np.random.default_rng(0).normal(size=(4, 2))).item() == 0.0
    with pytest.raises(ShapeError):
        linear_cka(np.ones((3, 2)), np.ones((4, 2)))
    with pytest.raises(ValueError):
        linear_cka(np.ones((1, 2)), np.ones((1, 2)))


def test_degenerate_cka_passes_finite_gradient():
    x = Tensor(np.zeros((3, 5, 4)), requires_grad=True)
    y = Tensor(np.random.default_rng(0).normal(size=(3, 5, 2)), requires_grad=True)
    ops.sum(batched_linear_cka(x, y)).backward()
    assert np.isfinite(x.grad).all() and np.isfinite(y.grad).all()


def test_batched_cka_matches_per_slice(rng):
    x, y = rng.normal(size=(4, 6, 5)), rng.normal(size=(4, 6, 3))
    stacked = batched_linear_cka(x, y).data
    for t in range(4):
        assert stacked[t] == pytest.approx(cka_hsic(x[t], y[t]), abs=1e-12)


def _acts(feats):
    feats = np.asarray(feats, dtype=float)
    return TemporalActivations(Tensor(feats), Tensor(np.zeros(feats.shape[:2] + (2,))))


def test_da_loss_limits(rng):
    f = rng.normal(size=(3, 6, 4))
    big = Parameter(np.full(3, 20.0), "theta")
    assert domain_alignment_loss(_acts(f), _acts(f), big, 2.0).item() == pytest.approx(0.0, abs=1e-6)
    small = Parameter(np.full(3, -40.0), "theta")
    assert domain_alignment_loss(_acts(f), _acts(rng.normal(size=f.shape)), small, 2.0).item() == \
        pytest.approx(2.0, abs=1e-12)


def test_da_loss_hand_example(rng):
    fs, fd = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 2))
    cls_e = 1.3
    expected = 0.5 * np.mean([1 - cka_hsic(fs[t], fd[t]) for t in range(2)]) + 0.5 * cls_e
    got = domain_alignment_loss(_acts(fs), _acts(fd), Parameter(np.zeros(2), "theta"), cls_e).item()
    assert got == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        domain_alignment_loss(_acts(fs), _acts(fd[:1]), Parameter(np.zeros(2), "theta"), cls_e)


def test_da_loss_gradients(rng):
    fs, fd = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 2))
    cls_e = Tensor(0.7)
    f_theta = lambda th: domain_alignment_loss(_acts(fs), _acts(fd), th, cls_e)
    assert grad_check(f_theta, rng.normal(size=2)) <= 1e-4
    f_feat = lambda x: domain_alignment_loss(TemporalActivations(x, Tensor(np.zeros((2, 5, 2)))), _acts(fd),
                                             Tensor(np.zeros(2)), cls_e)
    assert grad_check(f_feat, fs) <= 1e-4
    # cls_e is live inside the alignment loss
    c = Tensor(0.7, requires_grad=True)
    domain_alignment_loss(_acts(fs), _acts(fd), Tensor(np.zeros(2)), c).backward()
    assert c.grad == pytest.approx(0.5)


def test_tet_uniform_and_saturated():
    labels = np.array([0, 3, 2, 4, 1])
    assert tet_loss(np.zeros((3, 5, 7)), labels).item() == pytest.approx(math.log(7), abs=1e-9)
    z = np.zeros((4, 5, 7))
    z[:, np.arange(5), labels] = 50.0
    assert tet_loss(z, labels).item() <= 1e-9
    with pytest.raises(ValueError):
        tet_loss(np.zeros((1, 2, 3)), [0, 3])


def test_tet_hand_values():
    z = np.array([[[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]], [[0.2, 0.1, -0.3], [2.0, 2.0, 1.0]]])
    labels = [1, 2]
    expected = np.mean([ce_scalar(list(z[t, b]), labels[b]) for t in range(2) for b in range(2)])
    assert tet_loss(z, labels).item() == pytest.approx(expected, abs=1e-12)
    # list input and per-step CE agree
    assert tet_loss([z[0], z[1]], labels).item() == pytest.approx(expected, abs=1e-12)
    assert cross_entropy(z[0], labels).item() == pytest.approx(
        np.mean([ce_scalar(list(z[0, b]), labels[b]) for b in range(2)]), abs=1e-12)


def test_kd_examples():
    assert kd_loss(np.array([[2.0, 0.0]]), np.array([[0.0, 2.0]]), 1.0).item() == \
        pytest.approx(kl_scalar([2, 0], [0, 2], 1.0), abs=1e-12)
    z = np.random.default_rng(0).normal(size=(4, 5))
    assert kd_loss(z, z, 3.0).item() <= 1e-12
    far = kd_loss(np.array([[5.0, -5.0]]), np.array([[-5.0, 5.0]]), 1e6).item()
    assert far < 1e-9
    with pytest.raises(ValueError):
        kd_loss(z, z, 0.0)


@given(arrays(np.float64, (3, 4), elements=st.floats(-20, 20)), arrays(np.float64, (3, 4), elements=st.floats(-20, 20)),
       st.floats(0.5, 8.0))
def test_kd_nonnegative_and_batch_invariant(zt, zs, tau):
    v = kd_loss(zt, zs, tau).item()
    assert v >= -1e-12
    expected = np.mean([kl_scalar(list(zt[i]), list(zs[i]), tau) for i in range(3)])
    assert v == pytest.approx(expected, rel=1e-9, abs=1e-10)
    perm = [2, 0, 1]
    assert kd_loss(zt[perm], zs[perm], tau).item() == pytest.approx(v, rel=1e-12, abs=1e-15)


def test_kd_gradient_only_reaches_student(rng):
    zt = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    zs = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    kd_loss(zt, zs, 2.0).backward()
    assert zt.grad is None and zs.grad is not None


def test_phase_switch_examples():
    assert phase_switch(19.5, 100.0, 19.5) == 0.5
    assert phase_switch(20.5, 100.0, 19.5) < 1e-40
    assert phase_switch(0, 0.01, 150) == pytest.approx(1 - 1 / (1 + math.exp(1.5)), abs=1e-15)
    assert phase_switch(-1e6, 10.0, 0.0) == 1.0 and phase_switch(1e6, 10.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        phase_switch(0, 0.0, 1.0)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(-100, 100))
def test_phase_switch_monotone(e1, e2, k, e_th):
    lo, hi = min(e1, e2), max(e1, e2)
    assert 0.0 <= phase_switch(hi, k, e_th) <= phase_switch(lo, k, e_th) <= 1.0


def test_composed_losses():
    cfg = CkdLossConfig()
    assert (cfg.alpha, cfg.beta) == (1.0, 1.0)
    assert static_stream_loss(1.0, 2.0, 4.0, 0.5, cfg).item() == 5.0
    assert static_stream_loss(1.0, 2.0, 4.0, 0.0, cfg).item() == 3.0
    assert total_loss(0.0, 0.0).item() == 0.0
    assert total_loss(3.5, 1.5).item() == 5.0
    with pytest.raises(ValueError):
        CkdLossConfig(kd_temperature=0.0)
    with pytest.raises(ValueError):
        CkdLossConfig(timesteps=3, theta=Parameter(np.zeros(2), "theta"))


def test_total_loss_gradient_is_sum_of_terms(rng):
    w0 = rng.normal(size=(3, 4))
    x = rng.normal(size=(5, 4))
    labels = [0, 1, 2, 1, 0]

    def terms(w):
        z = ops.matmul(Tensor(x), ops.transpose(w))
        return cross_entropy(z, labels), ops.mean(ops.mul(z, z))

    grads = []
    for pick in (0, 1, None):
        w = Tensor(w0, requires_grad=True)
        a, b = terms(w)
        (a if pick == 0 else b if pick == 1 else total_loss(a, b)).backward()
        grads.append(w.grad)
    np.testing.assert_allclose(grads[2], grads[0] + grads[1], rtol=1e-12)
    assert grad_check(lambda w: total_loss(*terms(w)), w0) <= 1e-6
