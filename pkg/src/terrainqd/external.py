"""Wire protocol for plugging external simulators in as evaluators.

The external evaluator is a child process speaking newline-delimited
JSON on stdin/stdout, one request and one response per episode, in
order. Request:

    {"type": "episode",
     "heightmap": {"resolution": r, "rows": [[...], ...]},
     "seed": n, "dt": 0.005, "horizon": 20.0}

Response:

    {"type": "result", "penalties": [ang, lin_x, lin_y, contact, stumble],
     "collision": bool, "collision_count": int, "steps": int}

Anything else (malformed line, missing field, timeout, process death) is
an evaluation error; the optimizer scores the affected candidate at the
archive floor and moves on.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time

from .evaluation import DT_S, HORIZON_S, N_PENALTIES, EpisodeResult, EvaluationError
from .terrain import Heightmap

DEFAULT_TIMEOUT_S = 60.0


class ProtocolError(EvaluationError):
    """The external evaluator violated the wire protocol."""


class ExternalEvaluator:
    """One evaluator session: a child process handling episode requests."""

    def __init__(self, command, timeout_s: float = DEFAULT_TIMEOUT_S):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ValueError("external evaluator command is empty")
        self.command = argv
        self.timeout_s = float(timeout_s)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
        except OSError as exc:
            raise EvaluationError(f"cannot launch external evaluator {argv[0]!r}: {exc}") from exc
        self._buffer = b""

    # ------------------------------------------------------------------

    def run_episode(self, heightmap: Heightmap, seed: int,
                    dt: float = DT_S, horizon: float = HORIZON_S) -> EpisodeResult:
        self._check_alive()
        request = {
            "type": "episode",
            "heightmap": {
                "resolution": heightmap.resolution_m,
                "rows": [[float(v) for v in row] for row in heightmap.heights],
            },
            "seed": int(seed),
            "dt": float(dt),
            "horizon": float(horizon),
        }
        try:
            self._proc.stdin.write((json.dumps(request) + "\n").encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluationError(f"evaluator process died while receiving a request: "
                                  f"{self._exit_note()}") from exc
        line = self._read_line()
        return self._parse_response(line)

    def close(self) -> None:
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        if proc.stdout is not None:
            proc.stdout.close()

    def __enter__(self) -> "ExternalEvaluator":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # ------------------------------------------------------------------

    def _check_alive(self) -> None:
        code = self._proc.poll()
        if code is not None:
            raise EvaluationError(f"evaluator process has exited (exit code {code})")

    def _exit_note(self) -> str:
        code = self._proc.poll()
        return f"exit code {code}" if code is not None else "still running"

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout_s
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise EvaluationError(
                    f"external evaluator timed out after {self.timeout_s:g} s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise EvaluationError(
                    f"external evaluator timed out after {self.timeout_s:g} s")
            chunk = os.read(fd, 65536)
            if not chunk:
                self._proc.wait(timeout=5.0)
                raise EvaluationError(
                    f"evaluator process exited mid-episode ({self._exit_note()})")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    @staticmethod
    def _parse_response(line: bytes) -> EpisodeResult:
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not valid JSON: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ProtocolError("response must be a JSON object")
        if doc.get("type") != "result":
            raise ProtocolError(f"response type must be 'result', got {doc.get('type')!r}")
        for field in ("penalties", "collision", "collision_count", "steps"):
            if field not in doc:
                raise ProtocolError(f"response missing field '{field}'")
        penalties = doc["penalties"]
        if not isinstance(penalties, list) or len(penalties) != N_PENALTIES:
            raise ProtocolError(f"'penalties' must list {N_PENALTIES} values")
        values = []
        for i, v in enumerate(penalties):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise ProtocolError(f"'penalties'[{i}] must be a nonnegative number")
            values.append(float(v))
        if not isinstance(doc["collision"], bool):
            raise ProtocolError("'collision' must be a boolean")
        if not isinstance(doc["collision_count"], int) or doc["collision_count"] < 0:
            raise ProtocolError("'collision_count' must be a nonnegative integer")
        if not isinstance(doc["steps"], int) or doc["steps"] < 0:
            raise ProtocolError("'steps' must be a nonnegative integer")
        return EpisodeResult(
            raw_penalties=tuple(values),
            collision=doc["collision"],
            collision_count=doc["collision_count"],
            episode_steps=doc["steps"],
        )
