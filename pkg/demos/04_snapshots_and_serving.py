"""Snapshot files and the framed request/response service, end to end.

Writes an NNKA snapshot plus its CSV twin, verifies the round trip, then
drives an in-memory serve session the way a training harness would:
inline snapshot frames in, decision records out, a history file on disk,
and a bit-exact replay of the recorded decisions at the end.

Run: python3 demos/04_snapshots_and_serving.py
"""

import io
import json
import tempfile
from pathlib import Path

import numpy as np

from nnkstop import (
    ControllerConfig,
    EvalOptions,
    FeatureSnapshot,
    KernelSpec,
    LabelSet,
    NnkConfig,
    ServeConfig,
    load_run_history,
    read_frame,
    read_snapshot,
    serve_loop,
    snapshot_to_bytes,
    verify_history,
    write_frame,
    write_snapshot,
    write_snapshot_csv,
)

workdir = Path(tempfile.mkdtemp(prefix="nnkstop-demo-"))
rng = np.random.default_rng(11)
n = 60
y = rng.integers(0, 2, size=n)


def snapshot_at(step, drift):
    signal = (rng.normal(size=(n, 3)) + (3.0 - drift) * y[:, None]).astype(np.float32)
    noise = rng.normal(size=(n, 2)).astype(np.float32)
    return FeatureSnapshot(step=step, labels=LabelSet(y, 2), channels=(signal, noise))


print("== snapshot round trips ==")
snap = snapshot_at(step=1, drift=0.0)
binary_path = workdir / "snap.nnka"
write_snapshot(snap, binary_path)
write_snapshot_csv(snap, workdir / "snap_csv")
print(f"binary twin == csv twin: {read_snapshot(binary_path) == read_snapshot(workdir / 'snap_csv')}")
print(f"file size: {binary_path.stat().st_size} bytes for N={snap.N}, C={snap.C}, dims={snap.dims}")

print("\n== a serve session ==")
history_path = workdir / "history.log"
config = ServeConfig(
    controller=ControllerConfig(num_channels=2, patience=2),
    nnk=NnkConfig(K=10, kernel=KernelSpec(kind="cosine")),
    options=EvalOptions(seed=0),
    history_out=str(history_path),
)

requests = io.BytesIO()
write_frame(requests, json.dumps({"type": "status"}).encode())
# the signal channel degrades step by step: the controller eventually stops
for step, drift in [(1, 0.0), (2, 1.0), (3, 2.2), (4, 2.6), (5, 2.9), (6, 3.0)]:
    write_frame(requests, json.dumps(
        {"type": "evaluate", "step": step, "token": f"weights@{step}", "snapshot": "inline"}
    ).encode())
    write_frame(requests, snapshot_to_bytes(snapshot_at(step, drift)))
requests.seek(0)

responses = io.BytesIO()
exit_status = serve_loop(requests, responses, config)
responses.seek(0)
while (frame := read_frame(responses)) is not None:
    record = json.loads(frame.decode())
    if record["type"] == "status":
        print(f"status: q={record['q']} stopped={record['stopped']}")
    elif record["type"] == "decision":
        risks = {ch["channel"]: round(ch["loo_risk"], 3) for ch in record["channels"]}
        d = record["decision"]
        print(f"step {record['step']}: risks={risks} freeze={d['freeze_now']} "
              f"t*={d['t_star']} stopped={d['stopped']}")
    else:
        print(f"{record['type']}: {record.get('error', '')} {record.get('detail', '')}")
print(f"serve exit status: {exit_status}")

print("\n== replaying the recorded history ==")
cfg, entries, extra = load_run_history(history_path)
mismatches = verify_history(cfg, entries)
print(f"{len(entries)} evaluations recorded (seed {extra.get('seed')}); "
      f"replay mismatches: {mismatches or 'none'}")
print(f"artifacts left in {workdir}")
