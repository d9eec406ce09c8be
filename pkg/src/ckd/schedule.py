"""Cubic replacement schedule and construction of the hybrid input stream."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReplacementState:
    batch_index: int
    epoch_index: int
    batches_per_epoch: int
    total_batches: int

    def __post_init__(self):
        if self.total_batches <= 0:
            raise ValueError(f"total_batches must be > 0, got {self.total_batches}")
        if self.batches_per_epoch <= 0:
            raise ValueError(f"batches_per_epoch must be > 0, got {self.batches_per_epoch}")
        if not 0 <= self.batch_index < self.batches_per_epoch:
            raise ValueError(f"batch_index {self.batch_index} outside [0, {self.batches_per_epoch})")
        if self.epoch_index < 0:
            raise ValueError(f"epoch_index must be >= 0, got {self.epoch_index}")
        if self.global_index >= self.total_batches:
            raise ValueError(f"global batch {self.global_index} >= total_batches {self.total_batches}")

    @property
    def global_index(self) -> int:
        return self.batch_index + self.epoch_index * self.batches_per_epoch


def replace_probability(state: ReplacementState) -> float:
    """((b_i + e_c * b_l) / N_b) ** 3, with 0-based batch and epoch indices."""
    return (state.global_index / state.total_batches) ** 3


@dataclass
class HybridBatch:
    inputs: np.ndarray          # (B, T, 2, H, W)
    replaced_mask: np.ndarray   # (B,) bool
    labels: np.ndarray          # (B,) int


def apply_replacement(static_frames: np.ndarray, event_frames: np.ndarray, labels,
                      p: float, rng: np.random.Generator) -> HybridBatch:
    """Per-sample Bernoulli(p) swap of static frames for the paired event frames.

    One uniform draw per sample, in batch order, so a fixed seed replays the
    exact mask sequence.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    static_frames = np.asarray(static_frames)
    event_frames = np.asarray(event_frames)
    if static_frames.shape != event_frames.shape:
        raise ValueError(f"paired frame shapes differ: {static_frames.shape} vs {event_frames.shape}")
    mask = rng.random(len(static_frames)) < p
    sel = mask.reshape((-1,) + (1,) * (static_frames.ndim - 1))
    inputs = np.where(sel, event_frames, static_frames)
    return HybridBatch(inputs=inputs, replaced_mask=mask, labels=np.asarray(labels, dtype=np.int64).copy())
