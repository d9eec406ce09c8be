"""Conventional (non-spiking) teacher trained on static V-channel images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ckd import checkpoint
from ckd.engine import ops
from ckd.engine.optim import Adam
from ckd.engine.tensor import Parameter, Tensor, no_grad
from ckd.losses import cross_entropy


@dataclass(frozen=True)
class TeacherArch:
    input_shape: tuple = (1, 32, 32)
    channels: tuple = (32, 64)
    num_classes: int = 10
    kernel_size: int = 3
    pool: int = 2


class TeacherNet:
    """conv-ReLU-maxpool blocks and a linear readout. Single-step static input."""

    def __init__(self, arch: TeacherArch, params: dict[str, Parameter]):
        self.arch = arch
        self.params = params
        self.frozen = False

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def named_parameters(self) -> dict[str, Parameter]:
        return dict(self.params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def freeze(self) -> "TeacherNet":
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
            p.data = p.data.copy()
            p.data.flags.writeable = False
        self.frozen = True
        return self

    def forward(self, images) -> Tensor:
        """images: (B, H, W) V maps or (B, 1, H, W)."""
        x = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=np.float64)
        if x.ndim == 3:
            x = x[:, None]
        h = Tensor(x)
        pad = self.arch.kernel_size // 2
        for i in range(len(self.arch.channels)):
            h = ops.conv2d(h, self.params[f"conv{i}.weight"], self.params[f"conv{i}.bias"], padding=pad)
            h = ops.max_pool2d(ops.relu(h), self.arch.pool)
        return ops.linear(ops.flatten(h), self.params["readout.weight"], self.params["readout.bias"])

    __call__ = forward


def build_teacher(arch: TeacherArch | None = None, seed: int = 0) -> TeacherNet:
    arch = arch or TeacherArch()
    rng = np.random.default_rng(seed)
    c, h, w = arch.input_shape
    k = arch.kernel_size
    params = {}
    for i, ch in enumerate(arch.channels):
        fan_in = c * k * k
        params[f"conv{i}.weight"] = Parameter(rng.normal(0.0, np.sqrt(2.0 / fan_in), (ch, c, k, k)), f"conv{i}.weight")
        params[f"conv{i}.bias"] = Parameter(np.zeros(ch), f"conv{i}.bias")
        c, h, w = ch, h // arch.pool, w // arch.pool
        if h < 1 or w < 1:
            raise ValueError(f"input {arch.input_shape} collapses below 1x1 after pooling")
    d = c * h * w
    bound = 1.0 / np.sqrt(d)
    params["readout.weight"] = Parameter(rng.uniform(-bound, bound, (arch.num_classes, d)), "readout.weight")
    params["readout.bias"] = Parameter(np.zeros(arch.num_classes), "readout.bias")
    return TeacherNet(arch, params)


def train_teacher(images: np.ndarray, labels, epochs: int = 20, seed: int = 0, batch_size: int = 32,
                  lr: float = 1e-3, arch: TeacherArch | None = None, log=None) -> TeacherNet:
    """Cross-entropy training on V-channel images (N, H, W); returns the frozen net."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("teacher dataset is empty")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    if arch is None:
        arch = TeacherArch(input_shape=(1,) + images.shape[1:], num_classes=int(labels.max()) + 1)
    if labels.min() < 0 or labels.max() >= arch.num_classes:
        raise ValueError(f"labels must lie in [0, {arch.num_classes})")
    net = build_teacher(arch, seed)
    opt = Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss = cross_entropy(net(images[idx]), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        if log is not None:
            log(epoch, accuracy(net, images, labels))
    return net.freeze()


def teacher_logits(net: TeacherNet, images) -> Tensor:
    """Gradient-free teacher logits, (B, num_classes)."""
    if not net.frozen:
        raise RuntimeError("teacher must be frozen before it is used for distillation")
    with no_grad():
        return Tensor(net(images).data)


def accuracy(net: TeacherNet, images, labels, batch_size: int = 128) -> float:
    labels = np.asarray(labels)
    correct = 0
    with no_grad():
        for start in range(0, len(labels), batch_size):
            z = net(images[start:start + batch_size]).data
            correct += int((z.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / len(labels)


def teacher_state(net: TeacherNet) -> tuple[dict, dict]:
    a = net.arch
    meta = {"kind": "teacher", "frozen": net.frozen,
            "arch": {"input_shape": list(a.input_shape), "channels": list(a.channels),
                     "num_classes": a.num_classes, "kernel_size": a.kernel_size, "pool": a.pool}}
    return {k: p.data for k, p in net.params.items()}, meta


def save_teacher(path, net: TeacherNet) -> None:
    checkpoint.save(path, *teacher_state(net))


def load_teacher(path) -> TeacherNet:
    """Load a teacher checkpoint; frozen teachers come back frozen."""
    tensors, meta = checkpoint.load(path)
    if meta.get("kind") != "teacher":
        raise checkpoint.CheckpointError(f"{path} is not a teacher checkpoint")
    a = meta["arch"]
    arch = TeacherArch(tuple(a["input_shape"]), tuple(a["channels"]), a["num_classes"], a["kernel_size"], a["pool"])
    net = TeacherNet(arch, {k: Parameter(v, k) for k, v in tensors.items()})
    return net.freeze() if meta.get("frozen") else net
