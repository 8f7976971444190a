"""Feature-ablation experiment: rerun the identical walk-forward plan with
subsets of the top-ranked features removed and test whether accuracy moves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .errors import ConfigError
from .models import ModelSpec
from .stattests import DEFAULT_ALPHA, TestResult, route_analysis
from .walkforward import ErrorRecord, ForecastTuple, WalkForwardPlan, error_metrics, run_walk_forward

MAX_ABLATION_K = 8


@dataclass
class AblationResult:
    removed: tuple[str, ...]  # empty tuple = the full-feature reference run
    record: ErrorRecord
    delta_mape: float | None
    delta_mae: float
    delta_rmse: float
    abs_errors: tuple[float, ...]  # |actual - predicted| ordered by (origin, horizon)


def _pooled_record(tuples: list[ForecastTuple], model: str, window: str) -> tuple[ErrorRecord, tuple[float, ...]]:
    ok = [t for t in tuples if not t.failed]
    if not ok:
        raise ConfigError("ablation run produced no successful forecasts")
    metrics = error_metrics([(t.actual, t.predicted) for t in ok])
    ordered = sorted(ok, key=lambda t: (t.origin, t.horizon))
    abs_errors = tuple(abs(t.actual - t.predicted) for t in ordered)
    record = ErrorRecord(
        model=model,
        window=window,
        horizon=0,  # pooled over the plan's horizons
        mape=metrics.mape,
        mae=metrics.mae,
        rmse=metrics.rmse,
        n_forecasts=len(ok),
    )
    return record, abs_errors


def run_ablation(
    panel,
    best_spec: ModelSpec,
    plan: WalkForwardPlan,
    ranked_features: list[str],
    k: int,
    *,
    seed: int = 0,
    project: str = "",
    window: str = "",
) -> list[AblationResult]:
    """Walk-forward evaluation for every removal subset of the top-k features.

    The 2**k subsets include the empty set (the full-feature reference) and
    every leave-one-out, all with the identical plan and seed; deltas are
    measured against the full run.
    """
    if not best_spec.uses_exogenous:
        raise ConfigError(
            f"ablation requires an exogenous-capable model, got {best_spec.label}; "
            "use the best exogenous model from the comparison instead"
        )
    if k < 1 or k > MAX_ABLATION_K:
        raise ConfigError(f"ablation k must be in 1..{MAX_ABLATION_K}, got {k}")
    top = [name for name in ranked_features[:k]]
    unknown = set(top) - set(panel.feature_names)
    if unknown:
        raise ConfigError(f"ranked features not in panel: {sorted(unknown)}")

    subsets: list[tuple[str, ...]] = [()]
    for r in range(1, k + 1):
        subsets.extend(combinations(top, r))

    results: list[AblationResult] = []
    full_record = None
    full_errors = None
    for removed in subsets:
        view = panel.drop_features(removed) if removed else panel
        tuples = run_walk_forward(
            view, best_spec, plan, project=project, window=window, seed=seed
        )
        record, abs_errors = _pooled_record(tuples, best_spec.label, window)
        if removed == ():
            full_record, full_errors = record, abs_errors
        if full_record.mape is None or record.mape is None:
            delta_mape = None
        else:
            delta_mape = record.mape - full_record.mape
        results.append(
            AblationResult(
                removed=removed,
                record=record,
                delta_mape=delta_mape,
                delta_mae=record.mae - full_record.mae,
                delta_rmse=record.rmse - full_record.rmse,
                abs_errors=abs_errors,
            )
        )
    return results


def test_ablation_significance(
    full_errors,
    ablated_errors,
    *,
    alpha: float = DEFAULT_ALPHA,
) -> TestResult:
    """Paired comparison of per-origin absolute errors, routed by normality."""
    report = route_analysis([list(full_errors), list(ablated_errors)], alpha=alpha, paired=True)
    omnibus = report.omnibus
    note = f"branch={report.branch}" + (f"; {omnibus.note}" if omnibus.note else "")
    return TestResult(
        name=omnibus.name,
        statistic=omnibus.statistic,
        p_value=omnibus.p_value,
        alpha=omnibus.alpha,
        reject_null=omnibus.reject_null,
        n=omnibus.n,
        note=note,
    )


def write_ablation_csv(rows, path: str | Path) -> None:
    """rows: iterable of (project, window, AblationResult, p_value or None)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "project",
                "window",
                "model",
                "removed",
                "mape",
                "mae",
                "rmse",
                "n_forecasts",
                "delta_mape",
                "delta_mae",
                "delta_rmse",
                "p_value",
            ]
        )
        for project, window, result, p_value in rows:
            r = result.record
            writer.writerow(
                [
                    project,
                    window,
                    r.model,
                    ";".join(result.removed),
                    "" if r.mape is None else repr(r.mape),
                    repr(r.mae),
                    repr(r.rmse),
                    r.n_forecasts,
                    "" if result.delta_mape is None else repr(result.delta_mape),
                    repr(result.delta_mae),
                    repr(result.delta_rmse),
                    "" if p_value is None else repr(p_value),
                ]
            )
