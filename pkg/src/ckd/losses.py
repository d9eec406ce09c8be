"""Training objectives: linear CKA, domain alignment, TET, KD and the phase switch."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ckd.engine import ops
from ckd.engine.tensor import Parameter, ShapeError, Tensor, as_tensor
from ckd.spiking import TemporalActivations

CKA_EPS = 1e-12


@dataclass
class CkdLossConfig:
    alpha: float = 1.0
    beta: float = 1.0
    kd_temperature: float = 4.0
    k_switch: float = 100.0
    e_threshold: float = 19.5
    timesteps: int = 10
    theta: Parameter | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.kd_temperature > 0:
            raise ValueError("kd_temperature must be > 0")
        if not self.k_switch > 0:
            raise ValueError("k_switch must be > 0")
        if self.theta is None:
            self.theta = Parameter(np.zeros(self.timesteps), "theta")
        if self.theta.shape != (self.timesteps,):
            raise ValueError(f"theta must have length {self.timesteps}, got shape {self.theta.shape}")


def _center_rows(x: Tensor) -> Tensor:
    return ops.sub(x, ops.mean(x, axis=-2, keepdims=True))


def batched_linear_cka(x, y) -> Tensor:
    """Linear CKA for a stack of paired feature matrices.

    x: (..., n, p), y: (..., n, q) with at most one leading stack axis.
    Returns a tensor of shape ``x.shape[:-2]``. Uses the n x n Gram form,
    which equals ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) and is cheaper
    when features are wide. A stack entry whose normaliser falls below
    1e-12 evaluates to 0 and passes no gradient.
    """
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != y.ndim or x.ndim not in (2, 3) or x.shape[:-1] != y.shape[:-1]:
        raise ShapeError("linear_cka", x.shape, y.shape)
    n = x.shape[-2]
    if n < 2:
        raise ValueError(f"linear_cka needs at least 2 rows, got {n}")
    xc, yc = _center_rows(x), _center_rows(y)
    perm = (1, 0) if x.ndim == 2 else (0, 2, 1)
    kx = ops.matmul(xc, ops.transpose(xc, perm))
    ky = ops.matmul(yc, ops.transpose(yc, perm))
    axes = (-2, -1)
    hsic_xy = ops.sum(ops.mul(kx, ky), axis=axes)
    sx = ops.sum(ops.mul(kx, kx), axis=axes)
    sy = ops.sum(ops.mul(ky, ky), axis=axes)
    live = (np.sqrt(sx.data) >= CKA_EPS) & (np.sqrt(sy.data) >= CKA_EPS)
    if live.all():
        return ops.div(hsic_xy, ops.mul(ops.sqrt(sx), ops.sqrt(sy)))
    # degenerate entries: the squared norms are swapped for 1 before the root
    # (sqrt has no derivative at 0) and the result is zeroed
    on, off = Tensor(live * 1.0), Tensor(~live * 1.0)
    nx = ops.sqrt(ops.add(ops.mul(sx, on), off))
    ny = ops.sqrt(ops.add(ops.mul(sy, on), off))
    return ops.mul(ops.div(hsic_xy, ops.mul(nx, ny)), on)


def linear_cka(x, y) -> Tensor:
    """Linear CKA between two (n, p) and (n, q) feature matrices, in [0, 1]."""
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("linear_cka", x.shape, y.shape)
    return batched_linear_cka(x, y)


def domain_alignment_loss(static_acts: TemporalActivations, dynamic_acts: TemporalActivations,
                          theta, cls_e) -> Tensor:
    """Timestep-weighted 1 - CKA plus the dynamic classification regulariser.

    mean_t sigmoid(theta_t) * (1 - CKA_t) + mean_t (1 - sigmoid(theta_t)) * cls_e
    """
    fs = static_acts.features if isinstance(static_acts, TemporalActivations) else as_tensor(static_acts)
    fd = dynamic_acts.features if isinstance(dynamic_acts, TemporalActivations) else as_tensor(dynamic_acts)
    theta = as_tensor(theta)
    if fs.shape[0] != fd.shape[0] or theta.shape != (fs.shape[0],):
        raise ValueError(
            f"timestep mismatch: static {fs.shape[0]}, dynamic {fd.shape[0]}, theta {theta.shape}")
    w = ops.sigmoid(theta)
    cka = batched_linear_cka(fs, fd)
    align = ops.mean(ops.mul(w, ops.sub(1.0, cka)))
    reg = ops.mul(ops.mean(ops.sub(1.0, w)), as_tensor(cls_e))
    return ops.add(align, reg)


def _check_labels(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return labels


def cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy over the batch for (B, K) logits."""
    logits = as_tensor(logits)
    labels = _check_labels(labels, logits.shape[-1])
    logp = ops.log_softmax(logits)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return ops.scale(ops.sum(ops.mul(logp, Tensor(onehot))), -1.0 / len(labels))


def tet_loss(logits, labels) -> Tensor:
    """Per-timestep cross-entropy averaged over time.

    ``logits`` is a (T, B, K) tensor, a list of T (B, K) arrays, or
    :class:`TemporalActivations`.
    """
    if isinstance(logits, TemporalActivations):
        logits = logits.logits
    elif isinstance(logits, (list, tuple)):
        logits = np.stack([np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64) for z in logits])
    logits = as_tensor(logits)
    if logits.ndim != 3 or logits.shape[0] < 1:
        raise ValueError(f"tet_loss expects (T, B, K) logits with T >= 1, got {logits.shape}")
    steps, b, k = logits.shape
    labels = _check_labels(labels, k)
    if labels.shape != (b,):
        raise ShapeError("tet_loss", logits.shape, labels.shape)
    logp = ops.log_softmax(logits)
    onehot = np.zeros((1, b, k))
    onehot[0, np.arange(b), labels] = 1.0
    return ops.scale(ops.sum(ops.mul(logp, Tensor(onehot))), -1.0 / (steps * b))


def kd_loss(teacher_logits, student_logits, temperature: float) -> Tensor:
    """Sum over classes of KL(softmax(Z_t/T) || softmax(Z_s/T)), averaged over the batch.

    No T^2 factor. Gradient reaches only the student logits.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    zt = np.asarray(teacher_logits.data if isinstance(teacher_logits, Tensor) else teacher_logits,
                    dtype=np.float64)
    zs = as_tensor(student_logits)
    if zt.shape != zs.shape:
        raise ShapeError("kd_loss", zt.shape, zs.shape)
    zt = zt / temperature
    zt = zt - zt.max(axis=-1, keepdims=True)
    log_pt = zt - np.log(np.exp(zt).sum(axis=-1, keepdims=True))
    pt = np.exp(log_pt)
    log_ps = ops.log_softmax(ops.scale(zs, 1.0 / temperature))
    rows = 1 if zs.ndim == 1 else int(np.prod(zs.shape[:-1]))
    kl = ops.sum(ops.mul(Tensor(pt), ops.sub(log_pt, log_ps)))
    return ops.scale(kl, 1.0 / rows)


def phase_switch(epoch, k: float, e_th: float) -> float:
    """gamma(e) = 1 - 1 / (1 + exp(-k (e - e_th))), decreasing from 1 to 0."""
    if not k > 0:
        raise ValueError(f"k must be > 0, got {k}")
    z = -k * (epoch - e_th)
    # 1 - 1/(1+e^z) = e^z/(1+e^z) = 1/(1+e^-z), evaluated without overflow
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def static_stream_loss(cls_s, da, kd, gamma: float, cfg: CkdLossConfig):
    """alpha * cls_s + beta * da + gamma * kd."""
    return ops.add(ops.add(ops.scale(as_tensor(cls_s), cfg.alpha), ops.scale(as_tensor(da), cfg.beta)),
                   ops.scale(as_tensor(kd), gamma))


def total_loss(static_loss, cls_e):
    return ops.add(as_tensor(static_loss), as_tensor(cls_e))
