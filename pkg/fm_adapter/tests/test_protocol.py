"""Protocol conformance for the adapter, driven over a real subprocess."""

from __future__ import annotations

import json
import statistics
import subprocess
import sys

import pytest

from fm_adapter.server import handle_request


def run_transcript(lines: list[str], model: str = "mock") -> list[dict]:
    proc = subprocess.run(
        [sys.executable, "-m", "fm_adapter", model],
        input="\n".join(lines) + "\n",
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0, proc.stderr
    return [json.loads(line) for line in proc.stdout.splitlines()]


def _forecast_request(i: int, series, h: int, quantiles) -> str:
    return json.dumps(
        {
            "id": f"req-{i:03d}",
            "op": "forecast",
            "series": series,
            "h": h,
            "quantiles": quantiles,
            "model": "mock",
        }
    )


def test_fifty_request_golden_transcript():
    lines = []
    expected_kind = []  # ("hello",) | ("mean", series, h, quantiles) | ("error",)
    for i in range(50):
        if i % 10 == 0:
            lines.append(json.dumps({"id": f"req-{i:03d}", "op": "hello"}))
            expected_kind.append(("hello", None))
        elif i % 10 == 9:
            lines.append(json.dumps({"id": f"req-{i:03d}", "op": "forecast", "series": [1.0], "h": 0}))
            expected_kind.append(("error", None))
        else:
            series = [float(j + i % 5) for j in range(3 + i % 7)]
            h = 1 + i % 4
            quantiles = [0.05, 0.5, 0.95]
            lines.append(_forecast_request(i, series, h, quantiles))
            expected_kind.append(("mean", (series, h, quantiles)))
    responses = run_transcript(lines)
    assert len(responses) == 50
    for i, (response, (kind, payload)) in enumerate(zip(responses, expected_kind)):
        assert response["id"] == f"req-{i:03d}"  # ids echoed, order preserved
        if kind == "hello":
            assert "mock" in response["models"]
        elif kind == "error":
            assert response["error"] == "invalid horizon"
            assert "mean" not in response
        else:
            series, h, quantiles = payload
            assert len(response["mean"]) == h
            # golden values: independent re-statement of the mock rule
            last = series[-1]
            sd = statistics.pstdev(series)
            assert response["mean"] == [last] * h
            for q in quantiles:
                assert response["quantiles"][repr(q)] == [last + (q - 0.5) * 2 * sd] * h
            # monotone across levels at every step
            vectors = [response["quantiles"][repr(q)] for q in quantiles]
            for step in range(h):
                column = [vec[step] for vec in vectors]
                assert column == sorted(column)


def test_constant_series_collapses_quantiles_onto_mean():
    responses = run_transcript([_forecast_request(0, [4.0, 4.0, 4.0], 2, [0.1, 0.9])])
    r = responses[0]
    assert r["mean"] == [4.0, 4.0]
    assert r["quantiles"]["0.1"] == [4.0, 4.0]
    assert r["quantiles"]["0.9"] == [4.0, 4.0]


def test_server_is_stateless_across_requests():
    line = _forecast_request(1, [1.0, 5.0, 2.0], 3, [0.25, 0.75])
    responses = run_transcript([line, line])
    assert responses[0]["mean"] == responses[1]["mean"]
    assert responses[0]["quantiles"] == responses[1]["quantiles"]


def test_malformed_line_gets_unknown_id():
    responses = run_transcript(["this is not json"])
    assert responses[0]["id"] == "unknown"
    assert "malformed" in responses[0]["error"]


def test_parseable_line_with_bad_fields_echoes_its_id():
    bad = json.dumps({"id": "x9", "op": "forecast", "series": "nope", "h": 2})
    responses = run_transcript([bad])
    assert responses[0]["id"] == "x9"
    assert "series" in responses[0]["error"]


def test_unknown_op_is_an_error():
    responses = run_transcript([json.dumps({"id": "z", "op": "train"})])
    assert "unknown op" in responses[0]["error"]


def test_unknown_model_name_is_an_error():
    request = json.dumps(
        {"id": "m", "op": "forecast", "series": [1.0, 2.0], "h": 1, "model": "gpt9000"}
    )
    responses = run_transcript([request])
    assert "unknown model" in responses[0]["error"]


def test_unsorted_quantiles_are_rejected():
    request = json.dumps(
        {"id": "q", "op": "forecast", "series": [1.0], "h": 1, "quantiles": [0.9, 0.1]}
    )
    responses = run_transcript([request])
    assert "sorted" in responses[0]["error"]


def test_non_finite_series_is_rejected_without_crashing():
    # NaN is unrepresentable in strict JSON; a string sneaks past parsing instead
    request = json.dumps({"id": "n", "op": "forecast", "series": [1.0, "NaN"], "h": 1})
    responses = run_transcript([request])
    assert "finite" in responses[0]["error"]


def test_bare_handle_request_matches_subprocess_behavior():
    line = _forecast_request(2, [2.0, 4.0], 2, [0.5])
    assert handle_request(line, "mock") == run_transcript([line])[0]


def test_cli_rejects_unknown_default_model():
    proc = subprocess.run(
        [sys.executable, "-m", "fm_adapter", "nonexistent"],
        input="",
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 2
    assert "unknown model" in proc.stderr
