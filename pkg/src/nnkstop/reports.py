"""Run history records: line-delimited JSON, one record per evaluation.

A history file starts with a header record carrying the controller
configuration, followed by one evaluation record per LOO step: the
per-channel reports, the controller's decision, the wall-clock duration
and the subsampling seed. Records round-trip exactly, and a stored
history can be replayed through a fresh controller to check that the
recorded decisions are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .controller import ControllerConfig, Decision, controller_new, observe
from .interpolation import ChannelLooReport

SCHEMA = "nnk-history/1"


@dataclass(frozen=True)
class HistoryEntry:
    """Everything recorded for one evaluation step."""

    step: int
    reports: tuple[ChannelLooReport, ...]
    decision: Decision
    duration_s: float
    seed: Optional[int] = None
    token: Any = None


def _mask_to_hex(mask: np.ndarray) -> str:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes().hex()


def _mask_from_hex(hexstr: str, length: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].astype(bool)


def channel_report_dict(rep: ChannelLooReport) -> dict:
    return {
        "channel": rep.channel,
        "loo_risk": rep.loo_risk,
        "mean_neighbors": rep.mean_neighbor_count,
        "mean_same_class_weight": rep.mean_same_class_weight,
        "zero_fraction": rep.zero_fraction,
        "evaluated_nodes": rep.evaluated_nodes,
        "correct_bitmask": _mask_to_hex(rep.per_node_correct),
        "failed_nodes": list(rep.failed_nodes),
    }


def channel_report_from_dict(d: dict) -> ChannelLooReport:
    return ChannelLooReport(
        channel=int(d["channel"]),
        loo_risk=float(d["loo_risk"]),
        per_node_correct=_mask_from_hex(d["correct_bitmask"], int(d["evaluated_nodes"])),
        mean_neighbor_count=float(d["mean_neighbors"]),
        mean_same_class_weight=float(d["mean_same_class_weight"]),
        zero_fraction=float(d["zero_fraction"]),
        evaluated_nodes=int(d["evaluated_nodes"]),
        failed_nodes=tuple(int(i) for i in d["failed_nodes"]),
    )


def decision_dict(dec: Decision) -> dict:
    return {
        "freeze_now": list(dec.freeze_now),
        "best_updated": dec.best_updated,
        "t_star": dec.t_star,
        "stopped": dec.stopped,
    }


def decision_from_dict(d: dict) -> Decision:
    return Decision(
        freeze_now=tuple(int(c) for c in d["freeze_now"]),
        best_updated=bool(d["best_updated"]),
        t_star=int(d["t_star"]),
        stopped=bool(d["stopped"]),
    )


def write_report(entry: HistoryEntry) -> str:
    """One evaluation as a single JSON line."""
    record = {
        "schema": SCHEMA,
        "kind": "evaluation",
        "step": entry.step,
        "seed": entry.seed,
        "token": entry.token,
        "duration_s": entry.duration_s,
        "channels": [channel_report_dict(rep) for rep in entry.reports],
        "decision": decision_dict(entry.decision),
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def parse_report(line: str) -> HistoryEntry:
    record = json.loads(line)
    if record.get("schema") != SCHEMA or record.get("kind") != "evaluation":
        raise ValueError(f"not an evaluation record: {line[:60]!r}")
    return HistoryEntry(
        step=int(record["step"]),
        reports=tuple(channel_report_from_dict(d) for d in record["channels"]),
        decision=decision_from_dict(record["decision"]),
        duration_s=float(record["duration_s"]),
        seed=record["seed"],
        token=record["token"],
    )


def header_record(config: ControllerConfig, extra: Optional[dict] = None) -> str:
    record = {
        "schema": SCHEMA,
        "kind": "header",
        "config": {
            "num_channels": config.num_channels,
            "patience": config.patience,
            "eval_interval": config.eval_interval,
            "eval_period": config.eval_period,
            "track_combined_best": config.track_combined_best,
        },
        "extra": extra or {},
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def parse_header(line: str) -> tuple[ControllerConfig, dict]:
    record = json.loads(line)
    if record.get("schema") != SCHEMA or record.get("kind") != "header":
        raise ValueError("history must start with a header record")
    cfg = record["config"]
    return (
        ControllerConfig(
            num_channels=int(cfg["num_channels"]),
            patience=int(cfg["patience"]),
            eval_interval=int(cfg["eval_interval"]),
            eval_period=int(cfg["eval_period"]),
            track_combined_best=bool(cfg.get("track_combined_best", False)),
        ),
        record.get("extra", {}),
    )


def save_run_history(path, config: ControllerConfig, entries: Iterable[HistoryEntry], extra=None) -> None:
    with open(path, "w") as fh:
        fh.write(header_record(config, extra) + "\n")
        for entry in entries:
            fh.write(write_report(entry) + "\n")


def load_run_history(path) -> tuple[ControllerConfig, list[HistoryEntry], dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"empty history file {path}")
    config, extra = parse_header(lines[0])
    entries = [parse_report(ln) for ln in lines[1:]]
    steps = [e.step for e in entries]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("history steps must be strictly increasing")
    return config, entries, extra


def replay_decisions(config: ControllerConfig, entries: Sequence[HistoryEntry]) -> list[Decision]:
    """Run a fresh controller over the recorded risks."""
    state = controller_new(config)
    decisions = []
    for entry in entries:
        risks = {rep.channel: rep.loo_risk for rep in entry.reports}
        state, decision = observe(state, entry.step, risks, entry.token)
        decisions.append(decision)
    return decisions


def verify_history(config: ControllerConfig, entries: Sequence[HistoryEntry]) -> list[str]:
    """Mismatch descriptions between recorded and replayed decisions (empty = identical)."""
    mismatches = []
    for entry, replayed in zip(entries, replay_decisions(config, entries)):
        if replayed != entry.decision:
            mismatches.append(f"step {entry.step}: recorded {entry.decision}, replayed {replayed}")
    return mismatches
