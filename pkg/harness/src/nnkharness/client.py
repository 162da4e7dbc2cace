"""Framed client for the engine's serve protocol over a subprocess pipe.

One request, one response, strictly alternating. The engine runs as
``python -m nnkstop serve ...``; the client owns its stdin/stdout.
"""

from __future__ import annotations

import json
import struct
import subprocess
import sys


class EngineError(RuntimeError):
    """The engine broke the protocol or died."""


class EngineClient:
    def __init__(self, num_channels: int, patience: int, k: int, kernel: str = "cosine",
                 eval_interval: int = 1, eval_period: int = 1, subsample: int | None = None,
                 seed: int = 0, history_out: str | None = None):
        cmd = [
            sys.executable, "-m", "nnkstop", "serve",
            "--num-channels", str(num_channels),
            "--patience", str(patience),
            "--eval-interval", str(eval_interval),
            "--eval-period", str(eval_period),
            "--k", str(k),
            "--kernel", kernel,
            "--seed", str(seed),
        ]
        if subsample:
            cmd += ["--subsample", str(subsample)]
        if history_out:
            cmd += ["--history-out", history_out]
        self.proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def _send(self, payload: bytes) -> None:
        self.proc.stdin.write(struct.pack("<I", len(payload)))
        self.proc.stdin.write(payload)
        self.proc.stdin.flush()

    def _recv(self) -> dict:
        head = self.proc.stdout.read(4)
        if len(head) < 4:
            raise EngineError("engine closed the stream")
        (length,) = struct.unpack("<I", head)
        payload = self.proc.stdout.read(length)
        if len(payload) < length:
            raise EngineError("engine response truncated")
        return json.loads(payload.decode("utf-8"))

    def request(self, obj: dict) -> dict:
        self._send(json.dumps(obj).encode("utf-8"))
        return self._recv()

    def evaluate(self, step: int, token: str, snapshot: bytes) -> dict:
        self._send(json.dumps({"type": "evaluate", "step": step, "token": token,
                               "snapshot": "inline"}).encode("utf-8"))
        self._send(snapshot)
        response = self._recv()
        if response.get("type") == "error":
            raise EngineError(f"{response.get('error')}: {response.get('detail')}")
        return response

    def should_evaluate(self, step: int) -> bool:
        response = self.request({"type": "should_evaluate", "step": step})
        if response.get("type") != "should_evaluate":
            raise EngineError(f"unexpected response {response}")
        return bool(response["evaluate"])

    def status(self) -> dict:
        return self.request({"type": "status"})

    def close(self) -> int:
        if self.proc.stdin:
            self.proc.stdin.close()
        status = self.proc.wait(timeout=60)
        if self.proc.stdout:
            self.proc.stdout.close()
        return status

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
