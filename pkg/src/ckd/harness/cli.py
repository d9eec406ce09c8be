"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ckd import checkpoint
from ckd.data.events import EventFormatError
from ckd.data.store import DatasetError, load_dataset
from ckd.harness.config import MODES, ConfigError, RunConfig
from ckd.harness.runs import fit_teacher, run_training, write_dataset
from ckd.harness.sweep import sweep_csv, sweep_phase_params
from ckd.harness.train import NumericError, evaluate
from ckd.spiking import load_student
from ckd.teacher import load_teacher, save_teacher

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_config_args(p):
    p.add_argument("--config", help="JSON RunConfig file")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override any RunConfig field, value parsed as JSON")


def _config(args) -> RunConfig:
    if args.config and not Path(args.config).is_file():
        raise ConfigError(f"config file {args.config} not found")
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {k: getattr(args, k, None) for k in ("seed", "mode", "epochs", "batch_size", "lr")}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            over[key] = json.loads(raw)
        except json.JSONDecodeError:
            over[key] = raw
    return cfg.with_overrides(**over)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ckd", description="Cross-modality distillation for spiking networks, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="generate a synthetic paired dataset directory")
    _add_config_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-teacher", help="train and freeze the static-image teacher")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="CKD training or a baseline (--mode)")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", help="teacher checkpoint; trained into the run dir when omitted")
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("eval", help="top-1 of a student checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("sweep", help="(e_th, k) phase-switch grid")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", help="teacher checkpoint; trained on the fly when omitted")
    p.add_argument("--e-th", dest="e_th", type=_floats, default=[14.5, 19.5, 24.5])
    p.add_argument("--k", type=_floats, default=[0.1, 1.0, 100.0])
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("grad-check", help="finite-difference check of every registered op")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def _teacher_for(args, cfg, dataset, out_dir=None):
    if args.teacher:
        return load_teacher(args.teacher)
    if cfg.mode == "dvs_only_baseline":
        return None
    teacher = fit_teacher(cfg, dataset)
    if out_dir is not None:
        save_teacher(Path(out_dir) / "teacher.ckpt", teacher)
    return teacher


def _run(args) -> int:
    if args.command == "grad-check":
        from ckd.engine.gradcheck import run_registry
        worst = run_registry(seeds=range(args.seeds))
        for name, err in sorted(worst.items()):
            print(f"{name:24s} {err:.3e} {'ok' if err <= args.tol else 'FAIL'}")
        top = max(worst.values())
        print(f"max_rel_error={top:.3e}")
        return EXIT_OK if top <= args.tol else EXIT_NUMERIC

    if args.command == "eval":
        model = load_student(args.checkpoint)
        data = load_dataset(args.data)
        top1 = evaluate(model, data.event_frames("test", model.arch.timesteps), data.test_labels)
        print(f"top1={top1}")
        return EXIT_OK

    cfg = _config(args)
    if args.command == "synth-data":
        write_dataset(cfg, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK

    data = load_dataset(args.data)
    if args.command == "train-teacher":
        teacher = fit_teacher(cfg, data, log=lambda e, acc: print(f"epoch {e} train_top1={acc:.4f}"))
        save_teacher(args.out, teacher)
        return EXIT_OK

    if args.command == "train":
        run_dir = Path(args.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        teacher = _teacher_for(args, cfg, data, run_dir)
        result = run_training(cfg, data, teacher, run_dir)
        if result.final_top1 is not None:
            print(f"top1={result.final_top1}")
        return EXIT_OK

    if args.command == "sweep":
        teacher = _teacher_for(args, cfg.with_overrides(mode="ckd"), data)
        grid = [(e, k) for e in args.e_th for k in args.k]
        cells = sweep_phase_params(cfg, grid, data, teacher, seeds=args.seeds,
                                   log=lambda e, k, s, a: print(f"e_th={e:g} k={k:g} seed={s} top1={a:.4f}"))
        Path(args.out).write_text(sweep_csv(cells))
        return EXIT_OK if all(c.error is None for c in cells) else EXIT_NUMERIC
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, EventFormatError, checkpoint.CheckpointError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
