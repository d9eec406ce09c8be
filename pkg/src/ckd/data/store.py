"""On-disk dataset directories.

A directory holds ``manifest.json`` plus one ``.ckde`` event file and/or one
``.npy`` RGB image per sample. Manifest entries carry the split
(``train``, ``test`` or ``static``), the label and the relative paths; the
``static`` split is image-only and only ever serves as a pairing partner or
teacher input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ckd.data.events import EventStream, read_event_file, write_event_file
from ckd.data.frames import integrate_frames, value_channel
from ckd.data.pairing import DatasetIndex

MANIFEST = "manifest.json"
SPLITS = ("train", "test", "static")


class DatasetError(ValueError):
    pass


@dataclass
class PairedDataset:
    """Everything the training loop needs, kept in memory.

    Static images from the paired train split and from the static-only pool
    form one pairing pool; dynamic ids index ``train_events``.
    """

    static_images: np.ndarray            # (Ns, H, W, 3) uint8
    static_labels: np.ndarray            # (Ns,)
    train_events: list[EventStream]
    train_labels: np.ndarray
    test_events: list[EventStream]
    test_labels: np.ndarray
    meta: dict = field(default_factory=dict)
    _frames: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.static_images = np.asarray(self.static_images, dtype=np.uint8)
        self.static_labels = np.asarray(self.static_labels, dtype=np.int64)
        self.train_labels = np.asarray(self.train_labels, dtype=np.int64)
        self.test_labels = np.asarray(self.test_labels, dtype=np.int64)
        if len(self.static_images) != len(self.static_labels):
            raise DatasetError("static images and labels differ in length")
        if len(self.train_events) != len(self.train_labels) or len(self.test_events) != len(self.test_labels):
            raise DatasetError("event streams and labels differ in length")

    @property
    def image_shape(self) -> tuple[int, int]:
        if len(self.static_images):
            return tuple(self.static_images.shape[1:3])
        ev = (self.train_events or self.test_events)[0]
        return ev.height, ev.width

    @property
    def num_classes(self) -> int:
        labels = np.concatenate([self.static_labels, self.train_labels, self.test_labels])
        return int(labels.max()) + 1 if labels.size else 0

    def index(self) -> DatasetIndex:
        return DatasetIndex.from_labels(self.static_labels, self.train_labels)

    def static_values(self) -> np.ndarray:
        """V-channel maps (Ns, H, W)."""
        if "v" not in self._frames:
            self._frames["v"] = np.stack([value_channel(im) for im in self.static_images]) \
                if len(self.static_images) else np.zeros((0,) + self.image_shape)
        return self._frames["v"]

    def event_frames(self, split: str, steps: int) -> np.ndarray:
        """Normalized frames (N, T, 2, H, W) for the train or test split, cached per T."""
        key = (split, steps)
        if key not in self._frames:
            streams = {"train": self.train_events, "test": self.test_events}[split]
            h, w = self.image_shape
            out = np.zeros((len(streams), steps, 2, h, w))
            for i, s in enumerate(streams):
                out[i] = integrate_frames(s, steps, h, w)
            self._frames[key] = out
        return self._frames[key]


def from_synthetic(train, test, static_pool=(), meta: dict | None = None) -> PairedDataset:
    """Combine ``synth_paired_dataset`` splits and an optional static pool."""
    images = [s.static_image for s in train] + [im for im, _ in static_pool]
    labels = [s.label for s in train] + [y for _, y in static_pool]
    h, w = (train or test)[0].static_image.shape[:2]
    return PairedDataset(
        static_images=np.stack(images) if images else np.zeros((0, h, w, 3), np.uint8),
        static_labels=np.asarray(labels, dtype=np.int64),
        train_events=[s.event_stream for s in train],
        train_labels=np.asarray([s.label for s in train], dtype=np.int64),
        test_events=[s.event_stream for s in test],
        test_labels=np.asarray([s.label for s in test], dtype=np.int64),
        meta=dict(meta or {}),
    )


def save_dataset(root, train, test, static_pool=(), meta: dict | None = None) -> Path:
    root = Path(root)
    (root / "events").mkdir(parents=True, exist_ok=True)
    (root / "static").mkdir(parents=True, exist_ok=True)
    entries = []
    for split, samples in (("train", train), ("test", test)):
        for i, s in enumerate(samples):
            stem = f"{split}_{i:05d}"
            write_event_file(root / "events" / f"{stem}.ckde", s.event_stream)
            np.save(root / "static" / f"{stem}.npy", s.static_image)
            entries.append({"split": split, "label": int(s.label),
                            "events": f"events/{stem}.ckde", "static": f"static/{stem}.npy"})
    for i, (image, label) in enumerate(static_pool):
        stem = f"static_{i:05d}"
        np.save(root / "static" / f"{stem}.npy", image)
        entries.append({"split": "static", "label": int(label), "events": None, "static": f"static/{stem}.npy"})
    manifest = {"format": 1, "meta": dict(meta or {}), "samples": entries}
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def load_dataset(root) -> PairedDataset:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise DatasetError(f"no {MANIFEST} in {root}")
    try:
        manifest = json.loads(path.read_text())
        entries = manifest["samples"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest {path}: {exc}") from exc
    images, img_labels = [], []
    events = {"train": ([], []), "test": ([], [])}
    for e in entries:
        split = e.get("split")
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r} in manifest")
        label = int(e["label"])
        if split in ("train", "static"):
            images.append(np.load(root / e["static"]))
            img_labels.append(label)
        if split != "static":
            if not e.get("events"):
                raise DatasetError(f"{split} sample without an event file")
            streams, labels = events[split]
            streams.append(read_event_file(root / e["events"]))
            labels.append(label)
    if not images:
        raise DatasetError(f"dataset {root} has no static images")
    return PairedDataset(
        static_images=np.stack(images), static_labels=np.asarray(img_labels),
        train_events=events["train"][0], train_labels=np.asarray(events["train"][1], dtype=np.int64),
        test_events=events["test"][0], test_labels=np.asarray(events["test"][1], dtype=np.int64),
        meta=manifest.get("meta", {}),
    )
