"""Run configuration: JSON in, JSON out, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

from ckd.data.synth import SynthStyle
from ckd.losses import CkdLossConfig
from ckd.spiking import LifConfig, StudentArch
from ckd.teacher import TeacherArch

MODES = ("ckd", "no_kd_baseline", "dvs_only_baseline")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mode: str = "ckd"
    epochs: int = 40
    batch_size: int = 32
    timesteps: int = 10
    eval_every: int = 1
    # optimizer (Adam for student weights and theta)
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    # loss weights and phase switch
    alpha: float = 1.0
    beta: float = 1.0
    kd_temperature: float = 4.0
    k_switch: float = 100.0
    e_threshold: float = 19.5
    # fixed replacement probability instead of the cubic schedule (None = schedule)
    replace_p: float | None = None
    # neuron and architectures
    tau_leak: float = 0.5
    v_threshold: float = 1.0
    surrogate_width: float = 1.0
    student_channels: tuple = (16, 32)
    student_weight_gain: float = 6.0
    teacher_channels: tuple = (32, 64)
    teacher_epochs: int = 20
    teacher_seed: int = 0
    # synthetic data
    data_seed: int = 0
    num_classes: int = 10
    height: int = 32
    width: int = 32
    t_span: int = 100_000
    train_per_class: int = 6
    test_per_class: int = 50
    static_per_class: int = 50
    noise_rate: float = 0.08
    synth_spread: float = 0.3
    synth_sweep: tuple = (0.3, 0.8)
    synth_contrast: float = 0.2
    synth_bg_value: tuple = (0.0, 0.15)

    def __post_init__(self):
        object.__setattr__(self, "student_channels", tuple(int(c) for c in self.student_channels))
        object.__setattr__(self, "teacher_channels", tuple(int(c) for c in self.teacher_channels))
        object.__setattr__(self, "synth_sweep", tuple(float(c) for c in self.synth_sweep))
        object.__setattr__(self, "synth_bg_value", tuple(float(c) for c in self.synth_bg_value))
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("epochs", "batch_size", "timesteps", "eval_every", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (CKA centering needs two samples)")
        if self.teacher_epochs < 0:
            raise ConfigError("teacher_epochs must be >= 0")
        if self.replace_p is not None and not 0.0 <= self.replace_p <= 1.0:
            raise ConfigError("replace_p must lie in [0, 1]")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")

    # -- derived configs ---------------------------------------------------------
    def lif(self) -> LifConfig:
        return LifConfig(self.tau_leak, self.v_threshold, self.surrogate_width)

    def student_arch(self, in_shape=None, num_classes=None) -> StudentArch:
        h, w = in_shape or (self.height, self.width)
        return StudentArch(input_shape=(2, h, w), channels=self.student_channels, timesteps=self.timesteps,
                           lif=self.lif(), num_classes=num_classes or self.num_classes,
                           weight_gain=self.student_weight_gain)

    def teacher_arch(self, in_shape=None, num_classes=None) -> TeacherArch:
        h, w = in_shape or (self.height, self.width)
        return TeacherArch(input_shape=(1, h, w), channels=self.teacher_channels,
                           num_classes=num_classes or self.num_classes)

    def loss_config(self) -> CkdLossConfig:
        return CkdLossConfig(alpha=self.alpha, beta=self.beta, kd_temperature=self.kd_temperature,
                             k_switch=self.k_switch, e_threshold=self.e_threshold, timesteps=self.timesteps)

    def synth_style(self) -> SynthStyle:
        return SynthStyle(noise_rate=self.noise_rate, sweep=self.synth_sweep, spread=self.synth_spread,
                          contrast=self.synth_contrast, bg_value=self.synth_bg_value)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **kw)

    # -- JSON --------------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["student_channels"] = list(self.student_channels)
        d["teacher_channels"] = list(self.teacher_channels)
        d["synth_sweep"] = list(self.synth_sweep)
        d["synth_bg_value"] = list(self.synth_bg_value)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())
