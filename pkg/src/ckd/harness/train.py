"""CKD training loop, baselines, evaluation and the metrics CSV."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ckd.data.pairing import draw_static_partner
from ckd.data.store import PairedDataset
from ckd.engine.optim import Adam
from ckd.engine.tensor import Tensor, no_grad
from ckd.harness.config import RunConfig
from ckd.losses import (
    domain_alignment_loss, kd_loss, phase_switch, static_stream_loss, tet_loss, total_loss,
)
from ckd.schedule import ReplacementState, apply_replacement, replace_probability
from ckd.spiking import SpikingNetwork, build_student
from ckd.teacher import TeacherNet, teacher_logits

METRICS_HEADER = ("epoch", "batch", "p_replace", "gamma", "loss_cls_s", "loss_da", "loss_kd",
                  "loss_cls_e", "loss_all", "test_top1")


class NumericError(ArithmeticError):
    """A loss went non-finite."""


@dataclass
class MetricsRow:
    epoch: int
    batch: int
    p_replace: float
    gamma: float
    loss_cls_s: float
    loss_da: float
    loss_kd: float
    loss_cls_e: float
    loss_all: float
    test_top1: float | None = None

    def csv(self) -> str:
        vals = [str(self.epoch), str(self.batch)]
        vals += [_fmt(getattr(self, k)) for k in METRICS_HEADER[2:9]]
        vals.append("" if self.test_top1 is None else _fmt(self.test_top1))
        return ",".join(vals)


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def metrics_csv(rows) -> str:
    return ",".join(METRICS_HEADER) + "\n" + "".join(r.csv() + "\n" for r in rows)


@dataclass
class TrainResult:
    model: SpikingNetwork
    metrics: list[MetricsRow]
    theta: np.ndarray
    final_top1: float | None
    # (hybrid version, dynamic version) per batch; equal under weight sharing
    versions: list[tuple[int, int]] = field(default_factory=list)


def batch_slices(n: int, batch_size: int) -> list[slice]:
    """Contiguous batches; a trailing single sample joins the previous batch."""
    if n < 2:
        raise ValueError("need at least 2 training samples")
    cuts = list(range(0, n, batch_size)) + [n]
    if cuts[-1] - cuts[-2] == 1 and len(cuts) > 2:
        del cuts[-2]
    return [slice(a, b) for a, b in zip(cuts[:-1], cuts[1:])]


def evaluate(model: SpikingNetwork, frames: np.ndarray, labels, batch_size: int = 64) -> float:
    """Top-1 of the time-averaged logits on event frames (N, T, 2, H, W)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("test set is empty")
    if len(frames) != len(labels):
        raise ValueError(f"{len(frames)} samples but {len(labels)} labels")
    correct = 0
    with no_grad():
        for start in range(0, len(labels), batch_size):
            z = model.forward_temporal(frames[start:start + batch_size]).logits.data.mean(axis=0)
            correct += int((z.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / len(labels)


def _check_finite(name: str, t: Tensor, epoch: int, batch: int) -> float:
    v = float(t.data)
    if not math.isfinite(v):
        raise NumericError(f"{name} is {v} at epoch {epoch}, batch {batch}")
    return v


def train_ckd(config: RunConfig, dataset: PairedDataset, teacher: TeacherNet | None,
              on_row: Callable[[MetricsRow], None] | None = None) -> TrainResult:
    """Weight-shared two-stream student training.

    ``mode='ckd'`` is the full objective, ``no_kd_baseline`` drops the KD term
    (gamma = 0) and ``dvs_only_baseline`` trains on the dynamic stream alone
    with TET. ``on_row`` sees every metrics row as soon as it exists.
    """
    mode = config.mode
    if mode != "dvs_only_baseline":
        if teacher is None and mode == "ckd":
            raise ValueError("ckd mode needs a teacher")
        if teacher is not None and not teacher.frozen:
            raise RuntimeError("teacher must be frozen before distillation starts")
    steps = config.timesteps
    h, w = dataset.image_shape
    num_classes = max(dataset.num_classes, config.num_classes)
    index = dataset.index()
    train_frames = dataset.event_frames("train", steps)
    test_frames = dataset.event_frames("test", steps) if len(dataset.test_labels) else None
    static_v = dataset.static_values()
    n_train = len(dataset.train_labels)

    init_seq, shuffle_seq, pair_seq, replace_seq = np.random.SeedSequence([config.seed, 1]).spawn(4)
    model = build_student(config.student_arch((h, w), num_classes), seed=int(init_seq.generate_state(1)[0]))
    loss_cfg = config.loss_config()
    theta = loss_cfg.theta
    params = model.parameters() + ([theta] if mode != "dvs_only_baseline" else [])
    opt = Adam(params, lr=config.lr, betas=(config.adam_beta1, config.adam_beta2), eps=config.adam_eps,
               weight_decay=config.weight_decay)
    rng_shuffle = np.random.default_rng(shuffle_seq)
    rng_pair = np.random.default_rng(pair_seq)
    rng_replace = np.random.default_rng(replace_seq)

    slices = batch_slices(n_train, config.batch_size)
    per_epoch = len(slices)
    total = config.epochs * per_epoch
    rows: list[MetricsRow] = []
    versions: list[tuple[int, int]] = []
    top1 = None

    for epoch in range(config.epochs):
        order = rng_shuffle.permutation(n_train)
        gamma = phase_switch(epoch, config.k_switch, config.e_threshold) if mode == "ckd" else 0.0
        for b, sl in enumerate(slices):
            dyn_ids = order[sl]
            labels = dataset.train_labels[dyn_ids]
            state = ReplacementState(b, epoch, per_epoch, total)
            p = replace_probability(state) if config.replace_p is None else config.replace_p
            event_x = train_frames[dyn_ids]
            zero = Tensor(np.array(0.0))

            if mode == "dvs_only_baseline":
                dyn = model.forward_temporal(event_x)
                cls_e = tet_loss(dyn.logits, labels)
                cls_s = da = kd = zero
                loss = cls_e
                versions.append((dyn.param_version, dyn.param_version))
            else:
                partners = np.array([draw_static_partner(int(i), index, rng_pair) for i in dyn_ids])
                v = static_v[partners]
                static_x = np.broadcast_to(v[:, None, None], (len(v), steps, 2, h, w))
                hybrid = apply_replacement(static_x, event_x, labels, p, rng_replace)
                hyb = model.forward_temporal(hybrid.inputs)
                dyn = model.forward_temporal(event_x)
                versions.append((hyb.param_version, dyn.param_version))
                cls_s = tet_loss(hyb.logits, labels)
                cls_e = tet_loss(dyn.logits, labels)
                da = domain_alignment_loss(hyb, dyn, theta, cls_e)
                if mode == "ckd":
                    # teacher always sees the pair's original static image
                    zt = teacher_logits(teacher, v)
                    kd = kd_loss(zt, hyb.mean_logits(), config.kd_temperature)
                else:
                    kd = zero
                loss = total_loss(static_stream_loss(cls_s, da, kd, gamma, loss_cfg), cls_e)

            vals = [_check_finite(n, t, epoch, b) for n, t in
                    (("loss_cls_s", cls_s), ("loss_da", da), ("loss_kd", kd), ("loss_cls_e", cls_e),
                     ("loss_all", loss))]
            opt.zero_grad()
            loss.backward()
            opt.step()

            epoch_top1 = None
            if b == per_epoch - 1 and test_frames is not None and (
                    (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1):
                epoch_top1 = top1 = evaluate(model, test_frames, dataset.test_labels)
            row = MetricsRow(epoch, b, p, gamma, *vals, test_top1=epoch_top1)
            rows.append(row)
            if on_row is not None:
                on_row(row)

    return TrainResult(model=model, metrics=rows, theta=theta.data.copy(), final_top1=top1, versions=versions)
