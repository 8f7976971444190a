"""Line-delimited JSON forecast server over stdin/stdout.

One request object per line in, one response object per line out, in order.
Requests: ``{"id", "op": "hello" | "forecast", "series", "h", "quantiles",
"model"}``.  Responses echo the id and carry either ``mean`` (with optional
``quantiles``) or ``error``.  NaN and infinities are forbidden on the wire.
The process exits 0 when stdin closes.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import __version__
from .models import REGISTRY, ModelUnavailable, run_model

SERVER_NAME = "fm-adapter"


def _error(request_id, message: str) -> dict:
    return {"id": request_id, "error": message}


def _validated_forecast(req: dict):
    series = req.get("series")
    if not isinstance(series, list) or not series:
        raise ValueError("series must be a non-empty list")
    values = []
    for v in series:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ValueError("series values must be finite numbers")
        values.append(float(v))
    h = req.get("h")
    if not isinstance(h, int) or isinstance(h, bool) or h < 1:
        raise ValueError("invalid horizon")
    quantiles = req.get("quantiles", [])
    if not isinstance(quantiles, list):
        raise ValueError("quantiles must be a list")
    levels = []
    for q in quantiles:
        if not isinstance(q, (int, float)) or not 0.0 < q < 1.0:
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        levels.append(float(q))
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("quantile levels must be sorted strictly increasing")
    return values, h, levels


def handle_request(raw_line: str, default_model: str) -> dict:
    try:
        req = json.loads(raw_line)
    except json.JSONDecodeError as exc:
        return _error("unknown", f"malformed request: {exc}")
    if not isinstance(req, dict):
        return _error("unknown", "malformed request: expected an object")
    request_id = req.get("id", "unknown")
    op = req.get("op")
    if op == "hello":
        return {
            "id": request_id,
            "name": SERVER_NAME,
            "version": __version__,
            "models": sorted(REGISTRY),
        }
    if op == "forecast":
        try:
            series, h, levels = _validated_forecast(req)
        except ValueError as exc:
            return _error(request_id, str(exc))
        model = req.get("model", default_model)
        try:
            mean, quantile_map = run_model(model, series, h, levels)
        except ModelUnavailable as exc:
            return _error(request_id, str(exc))
        if not all(math.isfinite(v) for v in mean):
            return _error(request_id, f"model {model!r} produced non-finite values")
        return {
            "id": request_id,
            "mean": mean,
            "quantiles": {repr(q): vec for q, vec in quantile_map.items()},
        }
    return _error(request_id, f"unknown op {op!r}")


def serve(stdin, stdout, default_model: str) -> int:
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        response = handle_request(line, default_model)
        stdout.write(json.dumps(response, allow_nan=False) + "\n")
        stdout.flush()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fm-adapter", description=__doc__)
    parser.add_argument("model", help=f"default model to serve (one of {sorted(REGISTRY)})")
    args = parser.parse_args(argv)
    if args.model not in REGISTRY:
        print(f"error: unknown model {args.model!r} (have {sorted(REGISTRY)})", file=sys.stderr)
        return 2
    return serve(sys.stdin, sys.stdout, args.model)


if __name__ == "__main__":
    sys.exit(main())
