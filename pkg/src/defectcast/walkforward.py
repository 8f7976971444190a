"""Walk-forward evaluation: expanding-origin refits, multi-horizon forecasts,
and the MAPE/MAE/RMSE error records every statistical comparison consumes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EngineError, PanelError
from .models import ModelSpec, external_forecast, fit_model, forecast

MAPE_FLOOR = 1e-9  # actuals below this are excluded from MAPE (and counted)


@dataclass(frozen=True)
class WalkForwardPlan:
    initial_train: int
    step: int
    origins: tuple[int, ...]
    horizons: tuple[int, ...]
    mode: str = "expanding"  # or "sliding": fixed-width training window


def plan_walk_forward(
    n: int,
    horizons,
    *,
    initial_train: int | None = None,
    step: int = 1,
    mode: str = "expanding",
) -> WalkForwardPlan:
    """Walk-forward plan: fit on a prefix up to each origin, forecast
    origin .. origin+h-1.

    The first origin defaults to max(ceil(0.6 n), 8); origins advance by
    ``step`` up to the last index that still leaves room for the longest
    horizon.  Expanding mode trains on everything before the origin, sliding
    mode on the last ``initial_train`` observations only.
    """
    if mode not in ("expanding", "sliding"):
        raise ValueError(f"unknown walk-forward mode {mode!r}")
    horizons = tuple(sorted(set(int(h) for h in horizons)))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be positive integers")
    max_h = horizons[-1]
    if initial_train is None:
        initial_train = max(math.ceil(0.6 * n), 8)
    if n < initial_train + max_h:
        raise PanelError(
            f"panel of length {n} too short for walk-forward: "
            f"needs >= {initial_train + max_h} (initial {initial_train} + horizon {max_h})"
        )
    origins = tuple(range(initial_train, n - max_h + 1, step))
    return WalkForwardPlan(
        initial_train=initial_train, step=step, origins=origins, horizons=horizons, mode=mode
    )


@dataclass(frozen=True)
class ForecastTuple:
    project: str
    model: str
    window: str
    origin: int
    horizon: int
    actual: float
    predicted: float | None
    failed_reason: str | None = None

    @property
    def failed(self) -> bool:
        return self.predicted is None


def _future_features(panel, origin: int, max_h: int, mode: str) -> np.ndarray:
    if mode == "observed":
        return panel.features[origin : origin + max_h]
    if mode == "freeze":
        last = panel.features[origin - 1]
        return np.tile(last, (max_h, 1))
    raise ValueError(f"unknown exogenous mode {mode!r}")


def run_walk_forward(
    panel,
    model,
    plan: WalkForwardPlan,
    *,
    project: str = "",
    window: str = "",
    seed: int = 0,
    exog_future: str = "observed",
) -> list[ForecastTuple]:
    """Refit at every origin on the training prefix and score each horizon.

    ``model`` is either a :class:`ModelSpec` (fit natively) or a backend
    object with a ``forecast`` method.  Failures at an origin are recorded
    with a reason instead of aborting the run.
    """
    max_h = plan.horizons[-1]
    label = model.label if isinstance(model, ModelSpec) else getattr(model, "name", "backend")
    if not window and hasattr(panel, "grid"):
        window = panel.grid.length.label
    tuples: list[ForecastTuple] = []
    for origin in plan.origins:
        if plan.mode == "sliding":
            train = panel.window(origin - plan.initial_train, origin)
        else:
            train = panel.head(origin)
        try:
            if isinstance(model, ModelSpec):
                fitted = fit_model(train, model, seed=seed)
                future = (
                    _future_features(panel, origin, max_h, exog_future)
                    if model.uses_exogenous
                    else None
                )
                result = forecast(fitted, max_h, future, origin=origin)
            else:
                result = external_forecast(model, train.target, max_h, origin=origin)
            points = result.points
            failure = None
        except EngineError as exc:
            points, failure = None, str(exc)
        for h in plan.horizons:
            actual = float(panel.target[origin + h - 1])
            tuples.append(
                ForecastTuple(
                    project=project,
                    model=label,
                    window=window,
                    origin=origin,
                    horizon=h,
                    actual=actual,
                    predicted=float(points[h - 1]) if points is not None else None,
                    failed_reason=failure,
                )
            )
    return tuples


@dataclass(frozen=True)
class MetricSummary:
    mape: float | None  # percent; absent when every actual sat below the floor
    mae: float
    rmse: float
    n_excluded: int  # zero-actual pairs excluded from MAPE


def error_metrics(pairs) -> MetricSummary:
    """MAPE/MAE/RMSE over (actual, predicted) pairs; zero actuals leave MAPE."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("error_metrics needs at least one pair")
    actual = np.array([a for a, _ in pairs], dtype=float)
    predicted = np.array([p for _, p in pairs], dtype=float)
    err = actual - predicted
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    keep = np.abs(actual) >= MAPE_FLOOR
    n_excluded = int(np.sum(~keep))
    mape = float(100.0 * np.mean(np.abs(err[keep]) / np.abs(actual[keep]))) if keep.any() else None
    return MetricSummary(mape=mape, mae=mae, rmse=rmse, n_excluded=n_excluded)


@dataclass(frozen=True)
class ErrorRecord:
    model: str
    window: str
    horizon: int
    mape: float | None
    mae: float
    rmse: float
    n_forecasts: int


def summarize(tuples: list[ForecastTuple]) -> list[ErrorRecord]:
    """One ErrorRecord per (model, window, horizon) group, deterministically ordered."""
    if not tuples:
        raise ValueError("summarize needs at least one forecast tuple")
    groups: dict[tuple[str, str, int], list[tuple[float, float]]] = {}
    for t in tuples:
        if t.failed:
            continue
        groups.setdefault((t.model, t.window, t.horizon), []).append((t.actual, t.predicted))
    records = []
    for key in sorted(groups):
        model, window, horizon = key
        m = error_metrics(groups[key])
        records.append(
            ErrorRecord(
                model=model,
                window=window,
                horizon=horizon,
                mape=m.mape,
                mae=m.mae,
                rmse=m.rmse,
                n_forecasts=len(groups[key]),
            )
        )
    return records


def reliability_flags(tuples: list[ForecastTuple]) -> dict[tuple[str, str], bool]:
    """(model, window) -> True when more than half its origins failed."""
    failed: dict[tuple[str, str], set[int]] = {}
    seen: dict[tuple[str, str], set[int]] = {}
    for t in tuples:
        key = (t.model, t.window)
        seen.setdefault(key, set()).add(t.origin)
        if t.failed:
            failed.setdefault(key, set()).add(t.origin)
    return {
        key: len(failed.get(key, ())) > 0.5 * len(origins)
        for key, origins in sorted(seen.items())
    }


def write_forecasts_csv(tuples: list[ForecastTuple], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["project", "model", "window", "origin", "horizon", "actual", "predicted", "failed_reason"]
        )
        for t in tuples:
            writer.writerow(
                [
                    t.project,
                    t.model,
                    t.window,
                    t.origin,
                    t.horizon,
                    repr(t.actual),
                    "" if t.predicted is None else repr(t.predicted),
                    t.failed_reason or "",
                ]
            )
