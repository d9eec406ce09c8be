"""Synthetic paired RGB / event dataset.

Every class is a geometric archetype with a class-specific size. A sample's
static image is an anti-aliased render of the shape at a random position and
colour; its event stream comes from sweeping the same shape along a random
straight trajectory and emitting ON events (p=1) at pixels it newly covers and
OFF events (p=0) at pixels it vacates, plus uniform background activity.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from ckd.data.events import EventStream
from ckd.data.pairing import PairedSample


def _disk(a, b):
    return a * a + b * b <= 1.0


def _square(a, b):
    return np.maximum(np.abs(a), np.abs(b)) <= 0.8


def _triangle(a, b):
    return (b <= 0.75) & (np.abs(a) <= (b + 1.0) * 0.6)


def _plus(a, b):
    return ((np.abs(a) <= 0.3) & (np.abs(b) <= 1.0)) | ((np.abs(b) <= 0.3) & (np.abs(a) <= 1.0))


def _hbars(a, b):
    return (np.abs(a) <= 0.95) & (np.abs(b) <= 1.0) & (np.mod(b + 1.0, 0.8) < 0.36)


def _vbars(a, b):
    return _hbars(b, a)


def _ring(a, b):
    r2 = a * a + b * b
    return (r2 <= 1.0) & (r2 >= 0.3)


def _diamond(a, b):
    return np.abs(a) + np.abs(b) <= 1.05


def _xcross(a, b):
    return ((np.abs(a - b) <= 0.38) | (np.abs(a + b) <= 0.38)) & (np.maximum(np.abs(a), np.abs(b)) <= 0.85)


def _frame(a, b):
    m = np.maximum(np.abs(a), np.abs(b))
    return (m <= 0.85) & (m >= 0.5)


def _tee(a, b):
    return ((np.abs(b + 0.7) <= 0.28) & (np.abs(a) <= 1.0)) | ((np.abs(a) <= 0.28) & (b >= -0.7) & (b <= 1.0))


def _ell(a, b):
    return ((a >= -0.9) & (a <= -0.35) & (np.abs(b) <= 1.0)) | ((b >= 0.45) & (b <= 1.0) & (np.abs(a) <= 0.9))


ARCHETYPES = (
    ("disk", _disk), ("square", _square), ("triangle", _triangle), ("plus", _plus),
    ("hbars", _hbars), ("vbars", _vbars), ("ring", _ring), ("diamond", _diamond),
    ("xcross", _xcross), ("frame", _frame), ("tee", _tee), ("ell", _ell),
)

_SUPERSAMPLE = 4


def _membership(fn, h, w, cx, cy, radius, angle, ss):
    """Fraction of each pixel covered by the shape, estimated on an ss x ss grid."""
    offs = (np.arange(ss) + 0.5) / ss
    ys = (np.arange(h)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(w)[:, None] + offs[None, :]).reshape(-1)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    ca, sa = np.cos(angle), np.sin(angle)
    a = (ca * dx + sa * dy) / radius
    b = (-sa * dx + ca * dy) / radius
    inside = fn(a, b).astype(np.float64)
    return inside.reshape(h, ss, w, ss).mean(axis=(1, 3))


@dataclass(frozen=True)
class SynthStyle:
    """Rendering knobs shared by both modalities.

    ``spread`` scales how far from the image centre a shape may sit (1 uses
    the whole frame), ``sweep`` bounds the trajectory length in radii and
    ``contrast`` is the log-intensity step per event.
    """

    noise_rate: float = 0.08
    sweep: tuple = (0.3, 0.8)
    spread: float = 0.3
    contrast: float = 0.2
    bg_value: tuple = (0.0, 0.15)
    substeps: int = 24

    def __post_init__(self):
        if not 0.0 <= self.spread <= 1.0:
            raise ValueError("spread must lie in [0, 1]")
        if not self.contrast > 0 or self.noise_rate < 0 or self.substeps < 1:
            raise ValueError("contrast > 0, noise_rate >= 0 and substeps >= 1 are required")
        if not 0.0 <= self.sweep[0] <= self.sweep[1]:
            raise ValueError("sweep must be an ordered pair of non-negative lengths")


def _place(rng, lo, hi, spread):
    mid = 0.5 * (lo + hi)
    half = 0.5 * max(hi - lo, 0.0) * spread
    return rng.uniform(mid - half, mid + half)


def class_radius(label: int, h: int, w: int) -> float:
    return min(h, w) / 32.0 * (5.0 + 1.0 * (label % 3))


def sample_seed(seed: int, split: int, label: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, split, label, index])


def render_static(label, rng, h, w, style: SynthStyle = SynthStyle()):
    _, fn = ARCHETYPES[label]
    radius = class_radius(label, h, w) * rng.uniform(0.9, 1.1)
    angle = rng.uniform(-0.3, 0.3)
    margin = radius * 1.05
    cx = _place(rng, margin, w - margin, style.spread)
    cy = _place(rng, margin, h - margin, style.spread)
    cov = _membership(fn, h, w, cx, cy, radius, angle, _SUPERSAMPLE)
    fg = np.array(colorsys.hsv_to_rgb(rng.uniform(), rng.uniform(0.3, 1.0), rng.uniform(0.7, 1.0)))
    bg = np.array(colorsys.hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.6), rng.uniform(*style.bg_value)))
    img = bg[None, None, :] * (1.0 - cov[..., None]) + fg[None, None, :] * cov[..., None]
    img = img * 255.0 + rng.normal(0.0, 4.0, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_events(label, rng, h, w, t_span, style: SynthStyle = SynthStyle()):
    """Contrast-threshold event emulation of a shape sliding along a straight line.

    The bright shape sits on a darker background. Each pixel keeps a reference
    log intensity and fires one event per ``style.contrast`` step of change, so
    newly covered pixels give ON events and vacated ones OFF events.
    """
    _, fn = ARCHETYPES[label]
    radius = class_radius(label, h, w) * rng.uniform(0.9, 1.1)
    angle = rng.uniform(-0.3, 0.3)
    margin = radius * 1.05
    heading = rng.uniform(0.0, 2.0 * np.pi)
    dist = radius * rng.uniform(*style.sweep)
    ddx, ddy = dist * np.cos(heading), dist * np.sin(heading)
    lo_x, hi_x = margin + max(0.0, -ddx), w - margin - max(0.0, ddx)
    lo_y, hi_y = margin + max(0.0, -ddy), h - margin - max(0.0, ddy)
    if lo_x > hi_x or lo_y > hi_y:
        ddx, ddy = 0.5 * ddx, 0.5 * ddy
        lo_x, hi_x = margin + max(0.0, -ddx), w - margin - max(0.0, ddx)
        lo_y, hi_y = margin + max(0.0, -ddy), h - margin - max(0.0, ddy)
    x0 = _place(rng, lo_x, max(lo_x, hi_x), style.spread)
    y0 = _place(rng, lo_y, max(lo_y, hi_y), style.spread)
    fg = rng.uniform(0.6, 1.0)
    bg = rng.uniform(*style.bg_value)
    substeps, contrast = style.substeps, style.contrast

    def log_intensity(f):
        cov = _membership(fn, h, w, x0 + f * ddx, y0 + f * ddy, radius, angle, _SUPERSAMPLE)
        return np.log(bg + (fg - bg) * cov)

    ts, xs, ys, ps = [], [], [], []
    ref = log_intensity(0.0)
    for k in range(1, substeps + 1):
        diff = log_intensity(k / substeps) - ref
        n = np.floor(np.abs(diff) / contrast).astype(np.int64)
        yy, xx = np.nonzero(n)
        if yy.size:
            cnt = n[yy, xx]
            sign = np.sign(diff[yy, xx])
            ref[yy, xx] += sign * cnt * contrast
            total = int(cnt.sum())
            ts.append(((k - 1) + rng.uniform(0.0, 1.0, total)) / substeps * t_span)
            xs.append(np.repeat(xx, cnt))
            ys.append(np.repeat(yy, cnt))
            ps.append(np.repeat((sign > 0).astype(np.int64), cnt))
    n_noise = rng.poisson(style.noise_rate * h * w)
    ts.append(rng.uniform(0.0, t_span, n_noise))
    xs.append(rng.integers(0, w, n_noise))
    ys.append(rng.integers(0, h, n_noise))
    ps.append(rng.integers(0, 2, n_noise))

    t = np.minimum(np.floor(np.concatenate(ts)), t_span - 1).astype(np.uint64)
    x = np.concatenate(xs).astype(np.uint16)
    y = np.concatenate(ys).astype(np.uint16)
    p = np.concatenate(ps).astype(np.uint8)
    order = np.lexsort((p, x, y, t))
    return EventStream.from_arrays(w, h, t[order], x[order], y[order], p[order])


def make_sample(seed, split, label, index, h, w, t_span, style: SynthStyle = SynthStyle()) -> PairedSample:
    ss = sample_seed(seed, split, label, index)
    static_seq, event_seq = ss.spawn(2)
    image = render_static(label, np.random.default_rng(static_seq), h, w, style)
    events = render_events(label, np.random.default_rng(event_seq), h, w, t_span, style)
    return PairedSample(image, events, label)


def synth_paired_dataset(num_classes: int = 10, per_class: int = 20, height: int = 32, width: int = 32,
                         t_span: int = 100_000, seed: int = 0, test_per_class: int | None = None,
                         style: SynthStyle = SynthStyle()):
    """Returns ``(train, test)`` lists of PairedSample, class-ordered and balanced."""
    if not 1 <= num_classes <= len(ARCHETYPES):
        raise ValueError(f"num_classes must lie in [1, {len(ARCHETYPES)}], got {num_classes}")
    if per_class < 1 or height < 8 or width < 8 or t_span < 1:
        raise ValueError("per_class >= 1, height/width >= 8 and t_span >= 1 are required")
    test_per_class = per_class if test_per_class is None else test_per_class
    splits = []
    for split, count in ((0, per_class), (1, test_per_class)):
        splits.append([make_sample(seed, split, c, i, height, width, t_span, style)
                       for c in range(num_classes) for i in range(count)])
    return splits[0], splits[1]


def synth_static_pool(num_classes: int = 10, per_class: int = 50, height: int = 32, width: int = 32,
                      seed: int = 0, style: SynthStyle = SynthStyle()) -> list[tuple[np.ndarray, int]]:
    """Extra static-only renders ``(image, label)``; they share no seeds with the paired splits."""
    if not 1 <= num_classes <= len(ARCHETYPES):
        raise ValueError(f"num_classes must lie in [1, {len(ARCHETYPES)}], got {num_classes}")
    out = []
    for c in range(num_classes):
        for i in range(per_class):
            rng = np.random.default_rng(sample_seed(seed, 2, c, i))
            out.append((render_static(c, rng, height, width, style), c))
    return out
