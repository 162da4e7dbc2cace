"""Stopping-criterion comparison: validation patience vs full-layer
DeepNNK vs channel-wise DeepNNK, over multiple seeds.

Produces one row per (method, seed) with the test accuracy at each
criterion's best step, the stopping epoch and the wall-clock time, plus a
tab-separated table and optional risk-curve plots.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import HarnessConfig
from .loop import CW_DEEPNNK, DEEPNNK, VALIDATION, TrainResult, train_nnk_run, train_validation_run

METHODS = (VALIDATION, DEEPNNK, CW_DEEPNNK)


@dataclass
class ComparisonRow:
    method: str
    seed: int
    test_acc_at_best: float
    stop_epoch: int
    t_star: int
    wallclock_s: float


def run_single(config: HarnessConfig, seed: int, method: str, history_out=None) -> TrainResult:
    if method == VALIDATION:
        return train_validation_run(config, seed)
    if method == DEEPNNK:
        return train_nnk_run(config, seed, channelwise=False, history_out=history_out)
    if method == CW_DEEPNNK:
        return train_nnk_run(config, seed, channelwise=True, history_out=history_out)
    raise ValueError(f"unknown method {method!r}")


def run_comparison(config: HarnessConfig, seeds: Sequence[int], methods: Sequence[str] = METHODS,
                   out_dir=None) -> list[ComparisonRow]:
    """All (method, seed) runs; writes results.tsv and per-run history under out_dir."""
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in seeds:
        for method in methods:
            history = None
            if out_path is not None and method != VALIDATION:
                history = str(out_path / f"history_{method}_seed{seed}.log")
            result = run_single(config, seed, method, history_out=history)
            rows.append(ComparisonRow(
                method=method,
                seed=seed,
                test_acc_at_best=result.test_acc_at_best,
                stop_epoch=result.stop_epoch,
                t_star=result.t_star,
                wallclock_s=result.wallclock_s,
            ))
    if out_path is not None:
        write_table(rows, out_path / "results.tsv")
    return rows


def write_table(rows: Sequence[ComparisonRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(["method", "seed", "test_acc_at_best", "stop_epoch", "t_star", "wallclock_s"])
        for row in rows:
            writer.writerow([row.method, row.seed, f"{row.test_acc_at_best:.4f}",
                             row.stop_epoch, row.t_star, f"{row.wallclock_s:.2f}"])
        for method in dict.fromkeys(r.method for r in rows):
            group = [r for r in rows if r.method == method]
            accs = np.array([r.test_acc_at_best for r in group])
            stops = np.array([r.stop_epoch for r in group])
            writer.writerow([f"{method}:mean", "-", f"{accs.mean():.4f}",
                             f"{stops.mean():.1f}", "-", "-"])
            writer.writerow([f"{method}:std", "-", f"{accs.std(ddof=1) if len(accs) > 1 else 0.0:.4f}",
                             f"{stops.std(ddof=1) if len(stops) > 1 else 0.0:.1f}", "-", "-"])


def plot_risk_curves(result: TrainResult, path) -> None:
    """Per-channel LOO risk curves with the test loss overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for channel, curve in sorted(result.risk_curves.items()):
        xs, ys = zip(*curve)
        label = "full layer" if channel in (-1, 0) and result.method == DEEPNNK else f"channel {channel}"
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_ylabel("LOO interpolation risk" if result.method != VALIDATION else "validation loss")
    ax.axvline(result.t_star, color="gray", linestyle="--", label=f"t* = {result.t_star}")
    ax.legend(fontsize=8)
    xs, ys = zip(*result.test_loss_curve)
    ax2.plot(xs, ys, color="black", label="test loss")
    ax2.axvline(result.t_star, color="gray", linestyle="--")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("test loss")
    ax2.legend(fontsize=8)
    fig.suptitle(f"{result.method}, seed {result.seed}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
