"""(e_th, k) grid over the phase switch."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ckd.harness.config import RunConfig
from ckd.harness.train import train_ckd

SWEEP_HEADER = ("e_threshold", "k_switch", "log10_k", "n_seeds", "mean_top1", "min_top1", "max_top1", "status")


@dataclass
class SweepCell:
    e_threshold: float
    k_switch: float
    top1: list = field(default_factory=list)
    error: str | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.top1)) if self.top1 else math.nan

    def csv(self) -> str:
        if self.error is not None or not self.top1:
            stats = ["", "", ""]
            status = "failed: " + (self.error or "no runs").replace(",", ";").replace("\n", " ")
        else:
            stats = [format(self.mean, ".10g"), format(min(self.top1), ".10g"), format(max(self.top1), ".10g")]
            status = "ok"
        return ",".join([format(self.e_threshold, "g"), format(self.k_switch, "g"),
                         format(math.log10(self.k_switch), ".6g"), str(len(self.top1))] + stats + [status])


def sweep_phase_params(config: RunConfig, grid, dataset, teacher, seeds=None, known=None, log=None) -> list[SweepCell]:
    """Run ``train_ckd`` for every (e_th, k) cell and seed.

    Cells come back sorted by (e_th, k). A failing run marks its cell and the
    sweep moves on. ``known`` maps (e_th, k, seed) to an accuracy that is
    reused instead of retraining.
    """
    cells = sorted({(float(e), float(k)) for e, k in grid})
    if not cells:
        raise ValueError("sweep grid is empty")
    seeds = [config.seed] if seeds is None else list(seeds)
    known = known or {}
    out = []
    for e_th, k in cells:
        cell = SweepCell(e_th, k)
        for seed in seeds:
            key = (e_th, k, seed)
            try:
                if key in known:
                    acc = known[key]
                else:
                    cfg = config.with_overrides(e_threshold=e_th, k_switch=k, seed=seed, mode="ckd")
                    acc = train_ckd(cfg, dataset, teacher).final_top1
                cell.top1.append(float(acc))
            except Exception as exc:  # noqa: BLE001 - recorded in the CSV, sweep continues
                cell.error = f"{type(exc).__name__}: {exc}"
                break
            if log is not None:
                log(e_th, k, seed, cell.top1[-1])
        if cell.error is not None:
            cell.top1 = []
        out.append(cell)
    return out


def sweep_csv(cells) -> str:
    return ",".join(SWEEP_HEADER) + "\n" + "".join(c.csv() + "\n" for c in cells)
