"""Dataset/teacher construction from a RunConfig and run-directory output."""

from __future__ import annotations

from pathlib import Path

from ckd.data.store import PairedDataset, from_synthetic, save_dataset
from ckd.data.synth import synth_paired_dataset, synth_static_pool
from ckd.harness.config import RunConfig
from ckd.harness.train import METRICS_HEADER, TrainResult, train_ckd
from ckd.spiking import save_student
from ckd.teacher import TeacherNet, save_teacher, teacher_state, train_teacher
from ckd import checkpoint


def synth_splits(config: RunConfig):
    style = config.synth_style()
    train, test = synth_paired_dataset(config.num_classes, config.train_per_class, config.height, config.width,
                                       config.t_span, config.data_seed, test_per_class=config.test_per_class,
                                       style=style)
    pool = synth_static_pool(config.num_classes, config.static_per_class, config.height, config.width,
                             config.data_seed, style=style)
    return train, test, pool


def data_meta(config: RunConfig) -> dict:
    keys = ("data_seed", "num_classes", "height", "width", "t_span", "train_per_class", "test_per_class",
            "static_per_class", "noise_rate", "synth_spread", "synth_sweep", "synth_contrast", "synth_bg_value")
    d = config.to_dict()
    return {k: d[k] for k in keys}


def build_dataset(config: RunConfig) -> PairedDataset:
    """Synthesize the paired dataset described by ``config`` in memory."""
    train, test, pool = synth_splits(config)
    return from_synthetic(train, test, pool, meta=data_meta(config))


def write_dataset(config: RunConfig, root) -> Path:
    train, test, pool = synth_splits(config)
    return save_dataset(root, train, test, pool, meta=data_meta(config))


def fit_teacher(config: RunConfig, dataset: PairedDataset, log=None) -> TeacherNet:
    """Teacher on every static image the dataset holds (paired and static-only)."""
    arch = config.teacher_arch(dataset.image_shape, max(dataset.num_classes, config.num_classes))
    return train_teacher(dataset.static_values(), dataset.static_labels, epochs=config.teacher_epochs,
                         seed=config.teacher_seed, lr=config.lr, arch=arch, log=log)


def teacher_bytes(teacher: TeacherNet) -> bytes:
    return checkpoint.dumps(*teacher_state(teacher))


def run_training(config: RunConfig, dataset: PairedDataset, teacher: TeacherNet | None, run_dir) -> TrainResult:
    """train_ckd with the standard run-directory layout.

    ``config.json`` is written first, ``metrics.csv`` grows row by row (so an
    interrupted run leaves a valid prefix) and ``final.ckpt`` closes the run.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(config.to_json())
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")

        def on_row(row):
            fh.write(row.csv() + "\n")
            fh.flush()

        result = train_ckd(config, dataset, teacher, on_row=on_row)
    save_student(run_dir / "final.ckpt", result.model,
                 extra={"theta": result.theta.tolist(), "mode": config.mode, "seed": config.seed,
                        "final_top1": result.final_top1})
    return result


__all__ = ["build_dataset", "write_dataset", "fit_teacher", "teacher_bytes", "run_training", "save_teacher"]
