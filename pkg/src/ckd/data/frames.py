"""Event-frame integration and the static V-channel pipeline."""

from __future__ import annotations

import numpy as np

from ckd import kernels
from ckd.data.events import EventStream


def event_counts(stream: EventStream, steps: int, height: int, width: int) -> np.ndarray:
    """Raw per-bin, per-polarity counts, shape (T, 2, H, W).

    The span [t_min, t_max] is cut into T equal bins; an event at t lands in
    bin min(floor((t - t_min) / bin), T - 1). A zero-length span puts every
    event in bin 0.
    """
    if steps < 1:
        raise ValueError(f"T must be >= 1, got {steps}")
    if (stream.height, stream.width) != (height, width):
        raise ValueError(f"stream is {stream.height}x{stream.width}, frames requested at {height}x{width}")
    ev = stream.events
    if len(ev) == 0:
        return np.zeros((steps, 2, height, width))
    t = ev["t"].astype(np.int64)
    t_min = int(t.min())
    span = int(t.max()) - t_min
    # floor((t - t_min) / (span / T)) in exact integer arithmetic
    if span == 0:
        bins = np.zeros(len(t), dtype=np.int64)
    else:
        bins = np.minimum(((t - t_min) * steps) // span, steps - 1)
    return kernels.bin_events(bins, ev["x"], ev["y"], ev["p"], steps, height, width)


def integrate_frames(stream: EventStream, steps: int, height: int, width: int) -> np.ndarray:
    """Event counts divided by their maximum (when positive), values in [0, 1]."""
    counts = event_counts(stream, steps, height, width)
    peak = counts.max()
    return counts / peak if peak > 0 else counts


def value_channel(image: np.ndarray) -> np.ndarray:
    """HSV value V = max(R, G, B) / 255 for an 8-bit H x W x 3 image."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 RGB image, got shape {image.shape}")
    return image.max(axis=2).astype(np.float64) / 255.0


def static_to_frames(image: np.ndarray, steps: int) -> np.ndarray:
    """Replicate the V channel into both polarity channels and all T steps."""
    v = value_channel(image)
    return np.ascontiguousarray(np.broadcast_to(v, (steps, 2) + v.shape))
