"""Clients for external forecasting backends.

Backends speak line-delimited JSON over stdin/stdout: one request object per
line in, one response object per line out, order preserved.  Requests carry
``{id, op, series, h, quantiles, model}``; responses echo the id and carry
either ``mean`` (plus optional ``quantiles``) or ``error``.  A built-in
"naive" backend (repeat the last value) is always available so the pipeline
and tests never depend on a subprocess.
"""

from __future__ import annotations

import json
import selectors
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import BackendError, ProtocolError
from .base import ForecastResult

DEFAULT_TIMEOUT = 120.0
DEFAULT_QUANTILES = (0.05, 0.95)  # the 90% reporting interval


@dataclass
class BackendReply:
    mean: list[float]
    quantiles: dict[float, list[float]] = field(default_factory=dict)


class NaiveBackend:
    """Repeat the last observed value; the zero-cost reference backend."""

    name = "naive"

    def forecast(self, series, h: int, quantiles=()) -> BackendReply:
        if h < 1:
            raise BackendError("invalid horizon")
        if len(series) == 0:
            raise BackendError("empty series")
        last = float(series[-1])
        return BackendReply(mean=[last] * h, quantiles={float(q): [last] * h for q in quantiles})

    def close(self):
        pass


class SubprocessBackend:
    """One external backend process, one in-flight request at a time."""

    def __init__(self, argv: list[str], *, model: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.argv = list(argv)
        self.model = model
        self.timeout = timeout
        self.name = model or argv[-1]
        self._proc: subprocess.Popen | None = None
        self._counter = 0
        self._buffer = b""

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self.argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        hello = self._roundtrip({"op": "hello"})
        models = hello.get("models", [])
        if self.model is not None and models and self.model not in models:
            raise BackendError(f"backend does not serve model {self.model!r} (has {models})")

    def _next_id(self) -> str:
        self._counter += 1
        return f"req-{self._counter:06d}"

    def _read_line(self, deadline: float) -> bytes:
        proc = self._proc
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buffer:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BackendError(f"backend {self.name!r} timed out")
                if not sel.select(timeout=min(remaining, 0.5)):
                    if proc.poll() is not None and b"\n" not in self._buffer:
                        raise BackendError(f"backend {self.name!r} exited unexpectedly")
                    continue
                chunk = proc.stdout.read1(65536)
                if not chunk:
                    raise BackendError(f"backend {self.name!r} closed its output")
                self._buffer += chunk
        finally:
            sel.close()
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _roundtrip(self, payload: dict) -> dict:
        request_id = self._next_id()
        payload = {"id": request_id, **payload}
        line = json.dumps(payload, allow_nan=False) + "\n"
        try:
            self._proc.stdin.write(line.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BackendError(f"backend {self.name!r} is gone: {exc}") from None
        raw = self._read_line(time.monotonic() + self.timeout)
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"backend {self.name!r}: unparseable reply: {exc}") from None
        if reply.get("id") != request_id:
            raise ProtocolError(
                f"backend {self.name!r}: reply id {reply.get('id')!r} does not echo {request_id!r}"
            )
        if "error" in reply:
            raise BackendError(f"backend {self.name!r}: {reply['error']}")
        return reply

    def forecast(self, series, h: int, quantiles=()) -> BackendReply:
        self._ensure_started()
        reply = self._roundtrip(
            {
                "op": "forecast",
                "series": [float(v) for v in series],
                "h": int(h),
                "quantiles": [float(q) for q in quantiles],
                "model": self.model or self.name,
            }
        )
        mean = reply.get("mean")
        if not isinstance(mean, list) or len(mean) != h:
            raise ProtocolError(f"backend {self.name!r}: mean must be a length-{h} vector")
        if not all(isinstance(v, (int, float)) and np.isfinite(v) for v in mean):
            raise BackendError(f"backend {self.name!r}: non-finite forecast values")
        out_quantiles: dict[float, list[float]] = {}
        for key, vec in (reply.get("quantiles") or {}).items():
            if not isinstance(vec, list) or len(vec) != h:
                raise ProtocolError(f"backend {self.name!r}: quantile {key} has wrong length")
            if not all(np.isfinite(v) for v in vec):
                raise BackendError(f"backend {self.name!r}: non-finite quantile values")
            out_quantiles[float(key)] = [float(v) for v in vec]
        return BackendReply(mean=[float(v) for v in mean], quantiles=out_quantiles)

    def close(self):
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()
        self._proc = None

    def __enter__(self):
        self._ensure_started()
        return self

    def __exit__(self, *exc):
        self.close()


def external_forecast(backend, series, h: int, *, origin: int | None = None) -> ForecastResult:
    """Ask a backend for ``h`` points; map its 5%/95% quantiles to intervals."""
    if h < 1:
        raise BackendError("invalid horizon")
    reply = backend.forecast(series, h, quantiles=DEFAULT_QUANTILES)
    points = np.asarray(reply.mean, dtype=float)
    lower = upper = None
    if 0.05 in reply.quantiles and 0.95 in reply.quantiles:
        lower = np.asarray(reply.quantiles[0.05], dtype=float)
        upper = np.asarray(reply.quantiles[0.95], dtype=float)
    return ForecastResult(
        origin=origin if origin is not None else len(series),
        horizon=h,
        points=points,
        lower=lower,
        upper=upper,
    )
