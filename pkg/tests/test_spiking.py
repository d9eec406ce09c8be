import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckd.engine import ops
from ckd.engine.tensor import Parameter, ShapeError, Tensor
from ckd.spiking import (
    LifConfig, LifLayerState, SpikingNetwork, StudentArch, build_student, feature_shape, lif_scan, lif_step,
    load_student, save_student, surrogate_grad,
)

CFG = LifConfig(tau_leak=0.5, v_threshold=1.0)


@pytest.mark.parametrize("current, spike, u_next", [(1.2, 1.0, 0.0), (0.5, 0.0, 0.5)])
def test_lif_step_examples(current, spike, u_next):
    u, s = lif_step(Tensor([0.0]), Tensor([current]), CFG)
    assert s.data[0] == spike
    assert u.data[0] == pytest.approx(u_next)


def test_no_leak_no_threshold_holds_membrane():
    u0 = np.array([0.3, -2.0, 7.5])
    u, s = lif_step(Tensor(u0), Tensor(np.zeros(3)), LifConfig(tau_leak=1.0, v_threshold=1e300))
    np.testing.assert_array_equal(u.data, u0)
    np.testing.assert_array_equal(s.data, 0.0)


def test_lif_step_shape_mismatch():
    with pytest.raises(ShapeError):
        lif_step(Tensor(np.zeros(3)), Tensor(np.zeros(4)), CFG)


@pytest.mark.parametrize("bad", [dict(tau_leak=0.0), dict(tau_leak=1.5), dict(v_threshold=0.0),
                                 dict(surrogate_width=-1.0)])
def test_lif_config_validation(bad):
    with pytest.raises(ValueError):
        LifConfig(**bad)


@pytest.mark.parametrize("x, expected", [(0.0, 1.0), (1.0, 0.0), (-1.0, 0.0), (0.5, 0.5), (3.0, 0.0)])
def test_surrogate_values(x, expected):
    assert surrogate_grad(x, 1.0) == pytest.approx(expected)


def test_two_step_gradient_matches_hand_derivation():
    # I = (0.8, 0.9), tau = 0.5: v1 = 0.8 (no spike), v2 = 1.3 (spike).
    # dL/dI2 = sg(0.3) = 0.7
    # dL/dI1 = sg(-0.2) + sg(0.3) * tau * ((1 - s1) - v1 * sg(-0.2)) = 0.8 + 0.35 * 0.36
    expected = [0.8 + 0.7 * 0.5 * (1 - 0.8 * 0.8), 0.7]
    cur = Tensor([[0.8], [0.9]], requires_grad=True)
    ops.sum(lif_scan(cur, CFG)).backward()
    np.testing.assert_allclose(cur.grad[:, 0], expected, rtol=1e-12)

    c1, c2 = Tensor([0.8], requires_grad=True), Tensor([0.9], requires_grad=True)
    u, s1 = lif_step(LifLayerState.zeros(1).membrane, c1, CFG)
    _, s2 = lif_step(u, c2, CFG)
    ops.sum(ops.add(s1, s2)).backward()
    np.testing.assert_allclose([c1.grad[0], c2.grad[0]], expected, rtol=1e-12)


def test_pure_integrator_below_threshold(rng):
    cur = rng.uniform(0.0, 0.05, size=(6, 4))
    cfg = LifConfig(tau_leak=1.0, v_threshold=1.0)
    u = Tensor(np.zeros(4))
    for t in range(6):
        u, s = lif_step(u, Tensor(cur[t]), cfg)
        np.testing.assert_allclose(u.data, cur[: t + 1].sum(axis=0), rtol=1e-12)
        assert not s.data.any()


def test_hard_reset_erases_potential():
    # spike at t=1 means v_1 contributes nothing to u_2
    u, s = lif_step(Tensor([0.0]), Tensor([1.7]), CFG)
    assert s.data[0] == 1.0 and u.data[0] == 0.0
    u2, _ = lif_step(u, Tensor([0.25]), CFG)
    assert u2.data[0] == 0.25


@given(st.integers(1, 6), st.integers(1, 12), st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_scan_equals_step_chain_and_is_binary(steps, m, tau, seed):
    cur = np.random.default_rng(seed).normal(0.7, 0.9, size=(steps, m))
    cfg = LifConfig(tau_leak=tau)
    scanned = lif_scan(Tensor(cur), cfg).data
    assert set(np.unique(scanned)) <= {0.0, 1.0}
    u = Tensor(np.zeros(m))
    for t in range(steps):
        u, s = lif_step(u, Tensor(cur[t]), cfg)
        np.testing.assert_array_equal(s.data, scanned[t])


def test_default_student_dimensions():
    net = build_student()
    assert net.readout_dim == 32 * 8 * 8 == 2048
    acts = net.forward_temporal(np.zeros((10, 2, 32, 32)))
    assert acts.logits.shape == (10, 1, 10)
    assert len(acts.feature_list()) == len(acts.logit_list()) == 10
    assert net.num_parameters() == 16 * 2 * 9 + 32 * 16 * 9 + 10 * 2048 + 10


def test_zero_frames_give_bias_logits(rng):
    net = build_student(StudentArch(timesteps=3), seed=0)
    net.params["readout.bias"].data = rng.normal(size=10)
    acts = net.forward_temporal(np.zeros((2, 3, 2, 32, 32)))
    assert not acts.features.data.any()
    np.testing.assert_array_equal(acts.logits.data, np.broadcast_to(net.params["readout.bias"].data, (3, 2, 10)))


def test_forward_rejects_wrong_timesteps():
    net = build_student(StudentArch(timesteps=4))
    with pytest.raises(ValueError):
        net.forward_temporal(np.zeros((5, 2, 32, 32)))
    with pytest.raises(ShapeError):
        net.forward_temporal(np.zeros((4, 2, 16, 16)))


def test_collapse_raises():
    with pytest.raises(ValueError):
        feature_shape(StudentArch(input_shape=(2, 3, 3)))


def test_hand_unrolled_two_step_network():
    arch = StudentArch(input_shape=(1, 1, 2), channels=(1,), timesteps=2, num_classes=2, kernel_size=1, pool=1)
    params = {"conv0.weight": Parameter(np.array([[[[1.5]]]]), "conv0.weight"),
              "readout.weight": Parameter(np.array([[1.0, -1.0], [0.5, 2.0]]), "readout.weight"),
              "readout.bias": Parameter(np.array([0.1, -0.2]), "readout.bias")}
    net = SpikingNetwork(arch, params)
    frames = np.array([[[[0.5, 0.8]]], [[[0.4, 0.1]]]])  # (T, C, H, W)
    acts = net.forward_temporal(frames)
    u = np.zeros(2)
    for t in range(2):
        v = 0.5 * u + 1.5 * frames[t, 0, 0]
        s = (v >= 1.0).astype(float)
        u = v * (1 - s)
        np.testing.assert_array_equal(acts.features.data[t, 0], s)
        np.testing.assert_allclose(acts.logits.data[t, 0], params["readout.weight"].data @ s + [0.1, -0.2])


def test_weight_sharing_version(rng):
    net = build_student(StudentArch(timesteps=2))
    x = rng.uniform(size=(2, 2, 2, 32, 32))
    a, b = net.forward_temporal(x), net.forward_temporal(x[::-1])
    assert a.param_version == b.param_version == net.version
    # batch permutation equivariance
    np.testing.assert_array_equal(a.logits.data[:, ::-1], b.logits.data)


def test_seeded_init_and_checkpoint_roundtrip(tmp_path):
    a, b = build_student(seed=5), build_student(seed=5)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    save_student(tmp_path / "s.ckpt", a)
    c = load_student(tmp_path / "s.ckpt")
    assert c.arch == a.arch
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, c.params[k].data)
