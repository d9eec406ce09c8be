"""Same-category pairing of static and event samples."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ckd.data.events import EventStream


@dataclass
class PairedSample:
    static_image: np.ndarray  # H x W x 3, uint8
    event_stream: EventStream
    label: int

    def __post_init__(self):
        img = np.asarray(self.static_image)
        if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"static_image must be an H x W x 3 uint8 array, got {img.dtype} {img.shape}")


@dataclass
class DatasetIndex:
    """Per-class sample ids for each modality."""

    static_by_class: dict[int, list[int]] = field(default_factory=dict)
    dynamic_by_class: dict[int, list[int]] = field(default_factory=dict)
    dynamic_labels: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_labels(cls, static_labels, dynamic_labels) -> "DatasetIndex":
        s, d = defaultdict(list), defaultdict(list)
        for i, y in enumerate(static_labels):
            s[int(y)].append(i)
        for i, y in enumerate(dynamic_labels):
            d[int(y)].append(i)
        index = cls(dict(s), dict(d), {i: int(y) for i, y in enumerate(dynamic_labels)})
        index.check()
        return index

    def check(self) -> None:
        missing = sorted(set(self.dynamic_by_class) - {c for c, ids in self.static_by_class.items() if ids})
        if missing:
            raise KeyError(f"classes {missing} have dynamic samples but no static sample")


def draw_static_partner(dyn_id: int, index: DatasetIndex, rng: np.random.Generator) -> int:
    """Uniformly choose a static sample id of the same class as ``dyn_id``."""
    label = index.dynamic_labels[dyn_id]
    pool = index.static_by_class.get(label)
    if not pool:
        raise KeyError(f"class {label} has no static sample to pair with dynamic sample {dyn_id}")
    return pool[int(rng.integers(len(pool)))]


def pair_by_category(dyn_id: int, index: DatasetIndex, rng: np.random.Generator,
                     static_images, event_streams) -> PairedSample:
    """Build the PairedSample for ``dyn_id`` with a same-class static partner."""
    sid = draw_static_partner(dyn_id, index, rng)
    return PairedSample(static_images[sid], event_streams[dyn_id], index.dynamic_labels[dyn_id])
