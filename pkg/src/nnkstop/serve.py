"""Request/response service wrapping the stopping controller.

Transport is length-prefixed frames (u32 little-endian length, then the
payload) over a pair of binary streams, strictly alternating one request
and one response. Requests are JSON objects:

    {"type": "evaluate", "step": t, "token": ..., "snapshot": "inline"}
        followed by one frame of raw NNKA bytes (or ``"snapshot": "<path>"``
        with no extra frame). Response: one decision record.
    {"type": "status"}              -> full controller state
    {"type": "should_evaluate", "step": t} -> whether a LOO sweep is due

Responses are single JSON frames with deterministic byte layout (sorted
keys, no wall-clock fields), so replaying a recorded request stream
reproduces the recorded response stream exactly. Evaluate requests after
the run has stopped get a "run-stopped" error record; malformed requests
get an error record and the session continues.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, replace
from typing import BinaryIO, Optional

from .controller import (
    ContractError,
    ControllerConfig,
    StoppingState,
    active_channels,
    controller_new,
    observe,
    should_evaluate,
)
from .interpolation import EvalOptions, loo_risk_all_channels
from .nnk import NnkConfig
from .reports import HistoryEntry, channel_report_dict, decision_dict, header_record, write_report
from .snapshot import SnapshotDataError, SnapshotFormatError, read_snapshot, snapshot_from_bytes

DECISION_SCHEMA = "nnk-decision/1"
MAX_FRAME = 1 << 30


class FramingError(RuntimeError):
    """The byte stream broke mid-frame; the session cannot continue."""


@dataclass(frozen=True)
class ServeConfig:
    controller: ControllerConfig
    nnk: NnkConfig
    options: EvalOptions = EvalOptions()
    history_out: Optional[str] = None


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Next frame payload, or None at a clean end of stream."""
    head = stream.read(4)
    if not head:
        return None
    if len(head) < 4:
        raise FramingError("stream ended inside a frame header")
    (length,) = struct.unpack("<I", head)
    if length > MAX_FRAME:
        raise FramingError(f"frame of {length} bytes exceeds the {MAX_FRAME} limit")
    payload = stream.read(length)
    if len(payload) < length:
        raise FramingError(f"stream ended inside a {length}-byte frame")
    return payload


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(struct.pack("<I", len(payload)))
    stream.write(payload)
    stream.flush()


def _dumps(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _status_record(state: StoppingState) -> dict:
    return {
        "type": "status",
        "schema": DECISION_SCHEMA,
        "q": list(state.q),
        "r": [None if r == float("inf") else r for r in state.r],
        "t": state.t,
        "t_star": state.t_star,
        "frozen": list(state.frozen),
        "active": active_channels(state),
        "stopped": state.stopped,
        "best_checkpoint": state.best_checkpoint,
    }


def _error_record(code: str, detail: str) -> dict:
    return {"type": "error", "schema": DECISION_SCHEMA, "error": code, "detail": detail}


def serve_loop(rfile: BinaryIO, wfile: BinaryIO, config: ServeConfig) -> int:
    """Run the request/response session until end of stream.

    Returns 0 on a clean end of stream, 2 on transport corruption.
    Controller state persists across requests; a history file (when
    configured) receives a header record up front and one evaluation
    record per accepted evaluate request, flushed before the response
    goes out.
    """
    state = controller_new(config.controller)
    history = None
    try:
        if config.history_out:
            history = open(config.history_out, "w")
            history.write(header_record(config.controller, {"seed": config.options.seed}) + "\n")
            history.flush()
        while True:
            try:
                frame = read_frame(rfile)
            except FramingError as exc:
                try:
                    write_frame(wfile, _dumps(_error_record("transport", str(exc))))
                except Exception:
                    pass
                return 2
            if frame is None:
                return 0
            try:
                request = json.loads(frame.decode("utf-8"))
                if not isinstance(request, dict):
                    raise ValueError("request must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                write_frame(wfile, _dumps(_error_record("protocol", f"bad request frame: {exc}")))
                continue

            rtype = request.get("type")
            if rtype == "status":
                write_frame(wfile, _dumps(_status_record(state)))
            elif rtype == "should_evaluate":
                step = request.get("step")
                if not isinstance(step, int):
                    write_frame(wfile, _dumps(_error_record("protocol", "should_evaluate needs an integer step")))
                    continue
                record = {
                    "type": "should_evaluate",
                    "schema": DECISION_SCHEMA,
                    "step": step,
                    "evaluate": should_evaluate(state, step, config.controller),
                }
                write_frame(wfile, _dumps(record))
            elif rtype == "evaluate":
                state = _handle_evaluate(rfile, wfile, request, state, config, history)
            else:
                write_frame(wfile, _dumps(_error_record("protocol", f"unknown request type {rtype!r}")))
    finally:
        if history is not None:
            history.close()


def _handle_evaluate(
    rfile: BinaryIO,
    wfile: BinaryIO,
    request: dict,
    state: StoppingState,
    config: ServeConfig,
    history,
) -> StoppingState:
    source = request.get("snapshot")
    payload = None
    if source == "inline":
        # the snapshot frame must be consumed either way to stay in sync
        payload = read_frame(rfile)
        if payload is None:
            raise FramingError("stream ended before the inline snapshot frame")

    if state.stopped:
        write_frame(wfile, _dumps(_error_record("run-stopped", "all channels frozen; run is over")))
        return state
    step = request.get("step")
    if not isinstance(step, int):
        write_frame(wfile, _dumps(_error_record("protocol", "evaluate needs an integer step")))
        return state
    token = request.get("token")

    try:
        if payload is not None:
            snap = snapshot_from_bytes(payload)
        elif isinstance(source, str):
            snap = read_snapshot(source)
        else:
            write_frame(wfile, _dumps(_error_record("protocol", "snapshot must be 'inline' or a path")))
            return state
    except (SnapshotFormatError, SnapshotDataError, OSError) as exc:
        write_frame(wfile, _dumps(_error_record("snapshot", str(exc))))
        return state
    if snap.C != config.controller.num_channels:
        write_frame(
            wfile,
            _dumps(_error_record("snapshot", f"snapshot has {snap.C} channels, controller expects {config.controller.num_channels}")),
        )
        return state

    started = time.perf_counter()
    options = replace(config.options, channel_subset=tuple(active_channels(state)))
    try:
        reports = loo_risk_all_channels(snap, config.nnk, options)
        risks = {rep.channel: rep.loo_risk for rep in reports}
        new_state, decision = observe(state, step, risks, token)
    except (ContractError, ValueError) as exc:
        write_frame(wfile, _dumps(_error_record("contract", str(exc))))
        return state
    duration = time.perf_counter() - started

    entry = HistoryEntry(
        step=step,
        reports=tuple(reports),
        decision=decision,
        duration_s=duration,
        seed=config.options.seed,
        token=token,
    )
    if history is not None:
        history.write(write_report(entry) + "\n")
        history.flush()

    record = {
        "type": "decision",
        "schema": DECISION_SCHEMA,
        "step": step,
        "seed": config.options.seed,
        "channels": [channel_report_dict(rep) for rep in reports],
        "decision": decision_dict(decision),
    }
    write_frame(wfile, _dumps(record))
    return new_state
