"""Model registry for the adapter.

Every model is a callable (series, h, quantiles) -> (mean, quantile_map) that
works zero-shot; the server truncates the context to the model's maximum
window from the right before calling it.  The deterministic "mock" model is
always available so the protocol can be exercised without any weights.
Real pretrained backends are registered lazily: they load their library on
first use and report a clean error when it is not installed.
"""

from __future__ import annotations

import statistics

DEFAULT_MAX_CONTEXT = 512


class ModelUnavailable(Exception):
    """The requested model's runtime is not installed."""


def mock_model(series, h, quantiles):
    """Deterministic stand-in: repeat the last value, spread by the series sd.

    Quantile q at every step is mean + (q - 0.5) * 2 * sd(series), which is
    monotone across levels by construction and collapses onto the mean for a
    constant series.
    """
    last = float(series[-1])
    sd = statistics.pstdev(series) if len(series) > 1 else 0.0
    mean = [last] * h
    quantile_map = {q: [last + (q - 0.5) * 2.0 * sd] * h for q in quantiles}
    return mean, quantile_map


def _chronos_model(series, h, quantiles):
    try:
        import torch  # noqa: F401
        from chronos import ChronosPipeline
    except ImportError as exc:
        raise ModelUnavailable(f"chronos runtime not installed: {exc}") from None
    import torch

    pipeline = ChronosPipeline.from_pretrained("amazon/chronos-t5-small", device_map="cpu")
    context = torch.tensor(list(series), dtype=torch.float32)
    samples = pipeline.predict(context, h).squeeze(0).numpy()
    mean = samples.mean(axis=0).tolist()
    quantile_map = {}
    for q in quantiles:
        import numpy as np

        quantile_map[q] = np.quantile(samples, q, axis=0).tolist()
    return mean, quantile_map


def _timesfm_model(series, h, quantiles):
    try:
        import timesfm  # noqa: F401
    except ImportError as exc:
        raise ModelUnavailable(f"timesfm runtime not installed: {exc}") from None
    raise ModelUnavailable("timesfm hook present but no checkpoint configured")


REGISTRY = {
    "mock": (mock_model, DEFAULT_MAX_CONTEXT),
    "chronos": (_chronos_model, 512),
    "timesfm": (_timesfm_model, 512),
}


def run_model(name: str, series, h: int, quantiles):
    if name not in REGISTRY:
        raise ModelUnavailable(f"unknown model {name!r} (have {sorted(REGISTRY)})")
    fn, max_context = REGISTRY[name]
    context = list(series)[-max_context:]  # zero-shot: truncate from the right
    return fn(context, h, quantiles)
