"""LIF neurons, surrogate-gradient spiking and the weight-shared student SNN.

Membrane update per layer and timestep (hard reset)::

    v_t = tau * u_{t-1} + I_t
    s_t = H(v_t - V_th)
    u_t = v_t * (1 - s_t)

The backward pass replaces dH/dx by a triangular pseudo-derivative of
configurable width. Gradients flow through the reset term as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ckd import checkpoint, kernels
from ckd.engine import ops
from ckd.engine.tensor import Parameter, ShapeError, Tensor, as_tensor


@dataclass(frozen=True)
class LifConfig:
    tau_leak: float = 0.5
    v_threshold: float = 1.0
    surrogate_width: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.tau_leak <= 1.0:
            raise ValueError(f"tau_leak must lie in (0, 1], got {self.tau_leak}")
        if not self.v_threshold > 0.0:
            raise ValueError(f"v_threshold must be > 0, got {self.v_threshold}")
        if not self.surrogate_width > 0.0:
            raise ValueError(f"surrogate_width must be > 0, got {self.surrogate_width}")


@dataclass
class LifLayerState:
    membrane: Tensor

    @classmethod
    def zeros(cls, shape) -> "LifLayerState":
        return cls(Tensor(np.zeros(shape)))


def surrogate_grad(x, width: float = 1.0):
    """Triangular pseudo-derivative of the Heaviside step, max(0, 1 - |x|/w) / w."""
    return np.maximum(0.0, 1.0 - np.abs(x) / width) / width


def spike(x, width: float = 1.0, smooth: bool = False) -> Tensor:
    """Heaviside forward, triangular surrogate backward.

    With ``smooth=True`` the forward is the antiderivative of the surrogate,
    so its true derivative equals the surrogate. Used only for gradient checks.
    """
    x = as_tensor(x)
    mode = kernels.SMOOTH if smooth else kernels.HARD
    out = kernels._spike_numpy(x.data, width, mode)
    return Tensor._from_op(out, (x,), lambda g: (g * surrogate_grad(x.data, width),))


def lif_step(u, input_current, cfg: LifConfig, smooth: bool = False):
    """One LIF update. Returns ``(u_next, spikes)``."""
    u, input_current = as_tensor(u), as_tensor(input_current)
    if u.shape != input_current.shape:
        raise ShapeError("lif_step", u.shape, input_current.shape)
    v = ops.add(ops.scale(u, cfg.tau_leak), input_current)
    s = spike(ops.sub(v, cfg.v_threshold), cfg.surrogate_width, smooth)
    u_next = ops.mul(v, ops.sub(1.0, s))
    return u_next, s


def lif_scan(currents, cfg: LifConfig, smooth: bool = False) -> Tensor:
    """Run a LIF layer over the leading time axis of ``currents`` from zero state.

    Equivalent to chaining :func:`lif_step` T times, fused into one tape node.
    """
    currents = as_tensor(currents)
    steps = currents.shape[0]
    flat = currents.data.reshape(steps, -1)
    mode = kernels.SMOOTH if smooth else kernels.HARD
    spikes, vs = kernels.lif_forward(flat, cfg.tau_leak, cfg.v_threshold, cfg.surrogate_width, mode)

    def backward(g):
        gi = kernels.lif_backward(g.reshape(steps, -1), vs, spikes, cfg.tau_leak,
                                  cfg.v_threshold, cfg.surrogate_width)
        return (gi.reshape(currents.shape),)

    return Tensor._from_op(spikes.reshape(currents.shape), (currents,), backward)


@dataclass
class TemporalActivations:
    """Per-timestep penultimate features (T, B, D) and logits (T, B, K)."""

    features: Tensor
    logits: Tensor
    param_version: int = 0

    @property
    def steps(self) -> int:
        return self.features.shape[0]

    def feature_list(self) -> list[np.ndarray]:
        return [f for f in self.features.data]

    def logit_list(self) -> list[np.ndarray]:
        return [z for z in self.logits.data]

    def mean_logits(self) -> Tensor:
        return ops.mean(self.logits, axis=0)


@dataclass
class StudentArch:
    input_shape: tuple = (2, 32, 32)
    channels: tuple = (16, 32)
    timesteps: int = 10
    lif: LifConfig = field(default_factory=LifConfig)
    num_classes: int = 10
    kernel_size: int = 3
    pool: int = 2
    weight_gain: float = 2.0


class SpikingNetwork:
    """Conv-LIF-avgpool blocks followed by a per-timestep linear readout.

    Both the static (hybrid) stream and the dynamic stream are pushed through
    the same instance, so they share every parameter.
    """

    def __init__(self, arch: StudentArch, params: dict[str, Parameter]):
        self.arch = arch
        self.params = params

    # -- parameters -------------------------------------------------------------
    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def named_parameters(self) -> dict[str, Parameter]:
        return dict(self.params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    @property
    def version(self) -> int:
        return int(sum(p.version for p in self.params.values()))

    @property
    def readout_dim(self) -> int:
        return self.params["readout.weight"].shape[1]

    # -- forward ----------------------------------------------------------------
    def forward_temporal(self, frames, smooth: bool = False) -> TemporalActivations:
        """frames: (T, C, H, W) for one sample or (B, T, C, H, W) for a batch.

        Layers are evaluated for all timesteps at once; the LIF recurrence is
        the only sequential part and it is layer-local, so this is the same
        computation as stepping t = 1..T through the whole stack.
        """
        x = frames.data if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float64)
        if x.ndim == 4:
            x = x[None]
        if x.ndim != 5:
            raise ShapeError("forward_temporal", x.shape, (None, self.arch.timesteps) + tuple(self.arch.input_shape))
        b, steps = x.shape[0], x.shape[1]
        if steps != self.arch.timesteps:
            raise ValueError(f"expected {self.arch.timesteps} timesteps, got {steps}")
        if tuple(x.shape[2:]) != tuple(self.arch.input_shape):
            raise ShapeError("forward_temporal", x.shape[2:], self.arch.input_shape)
        version = self.version
        cfg = self.arch.lif
        pad = self.arch.kernel_size // 2
        h = Tensor(np.ascontiguousarray(x.transpose(1, 0, 2, 3, 4)).reshape((steps * b,) + x.shape[2:]))
        for i in range(len(self.arch.channels)):
            cur = ops.conv2d(h, self.params[f"conv{i}.weight"], padding=pad)
            shape = cur.shape
            spikes = lif_scan(ops.reshape(cur, (steps, b) + shape[1:]), cfg, smooth)
            h = ops.avg_pool2d(ops.reshape(spikes, shape), self.arch.pool)
        feats = ops.flatten(h)
        logits = ops.linear(feats, self.params["readout.weight"], self.params["readout.bias"])
        return TemporalActivations(
            features=ops.reshape(feats, (steps, b, feats.shape[1])),
            logits=ops.reshape(logits, (steps, b, logits.shape[1])),
            param_version=version,
        )

    __call__ = forward_temporal


def feature_shape(arch: StudentArch) -> tuple[int, int, int]:
    c, h, w = arch.input_shape
    for ch in arch.channels:
        h, w = h // arch.pool, w // arch.pool
        if h < 1 or w < 1:
            raise ValueError(f"input {arch.input_shape} collapses below 1x1 after pooling")
        c = ch
    return c, h, w


def build_student(arch: StudentArch | None = None, seed: int = 0) -> SpikingNetwork:
    """Seeded construction of the desk-scale conv-spiking student."""
    arch = arch or StudentArch()
    c_out, h, w = feature_shape(arch)
    rng = np.random.default_rng(seed)
    params: dict[str, Parameter] = {}
    c_in = arch.input_shape[0]
    k = arch.kernel_size
    for i, ch in enumerate(arch.channels):
        fan_in = c_in * k * k
        std = arch.weight_gain * np.sqrt(1.0 / fan_in)
        params[f"conv{i}.weight"] = Parameter(rng.normal(0.0, std, (ch, c_in, k, k)), f"conv{i}.weight")
        c_in = ch
    d = c_out * h * w
    bound = 1.0 / np.sqrt(d)
    params["readout.weight"] = Parameter(rng.uniform(-bound, bound, (arch.num_classes, d)), "readout.weight")
    params["readout.bias"] = Parameter(np.zeros(arch.num_classes), "readout.bias")
    return SpikingNetwork(arch, params)


def save_student(path, net: SpikingNetwork, extra: dict | None = None) -> None:
    a = net.arch
    meta = {"kind": "student",
            "arch": {"input_shape": list(a.input_shape), "channels": list(a.channels), "timesteps": a.timesteps,
                     "lif": [a.lif.tau_leak, a.lif.v_threshold, a.lif.surrogate_width],
                     "num_classes": a.num_classes, "kernel_size": a.kernel_size, "pool": a.pool,
                     "weight_gain": a.weight_gain},
            "extra": extra or {}}
    checkpoint.save(path, {k: p.data for k, p in net.params.items()}, meta)


def load_student(path) -> SpikingNetwork:
    tensors, meta = checkpoint.load(path)
    if meta.get("kind") != "student":
        raise checkpoint.CheckpointError(f"{path} is not a student checkpoint")
    a = meta["arch"]
    arch = StudentArch(tuple(a["input_shape"]), tuple(a["channels"]), a["timesteps"], LifConfig(*a["lif"]),
                       a["num_classes"], a["kernel_size"], a["pool"], a["weight_gain"])
    return SpikingNetwork(arch, {k: Parameter(v, k) for k, v in tensors.items()})
