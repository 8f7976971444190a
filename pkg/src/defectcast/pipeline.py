"""Configuration-driven study pipeline.

Runs ingest -> lifecycle labeling -> panel building -> walk-forward
evaluation per (project, window, model) -> statistical comparisons ->
feature importance -> ablation, writing every raw table plus the report.
Failures isolate at (project, model, window) granularity: a model that
cannot be fit on one panel becomes a flagged cell, not a dead run.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .ablation import run_ablation, test_ablation_significance, write_ablation_csv
from .errors import ConfigError, EngineError
from .importance import all_importances, consensus_ranking, write_consensus_csv, write_importance_csv
from .ingest import load_project, passes_mining_filter
from .lifecycle import label_project, write_defects_csv, write_density_csv
from .models import Kind, ModelSpec, NaiveBackend, SubprocessBackend, select_order
from .panel import WindowLength, build_panel, write_panel_csv
from .report import StudyReport, emit_report
from .seeds import child_seed
from .stattests import report_payload, route_analysis, write_stats_json
from .walkforward import (
    plan_walk_forward,
    reliability_flags,
    run_walk_forward,
    summarize,
    write_forecasts_csv,
)

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = (1, 2, 4, 8, 12)

TSA_KIND_NAMES = {"ARIMA", "ARIMAX", "SARIMA", "SARIMAX"}
BAYES_KIND_NAMES = {"BDLT", "BETS", "BDLM", "BDGLM"}


@dataclass
class ModelEntry:
    """One configured model: a native spec (possibly order-searched) or a backend."""

    name: str
    kind: str | None = None  # native kind name, None for backends
    order: tuple[int, int, int] | None = None  # None -> grid-search the order
    seasonal: tuple[int, int, int, int] | None = None
    backend_argv: tuple[str, ...] | None = None  # set for external backends


@dataclass
class RunConfig:
    projects: list[str]
    windows: list[str]
    models: list[ModelEntry]
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    alpha: float = 0.01
    seed: int = 0
    output_dir: str = "out"
    ablation_k: int = 0
    mining_filter_now: int | None = None
    exog_future: str = "observed"  # or "freeze"
    workers: int = 1  # walk-forward task pool width; does not affect results
    base_dir: Path = field(default_factory=Path)

    def validate(self):
        if not self.projects:
            raise ConfigError("config needs at least one project")
        if not self.windows:
            raise ConfigError("config needs at least one window length")
        for w in self.windows:
            WindowLength.parse(w)
        if not self.models:
            raise ConfigError("config needs at least one model")
        if not 0.0 < self.alpha < 0.5:
            raise ConfigError(f"alpha {self.alpha} outside (0, 0.5)")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ConfigError("horizons must be positive")
        if self.ablation_k < 0 or self.ablation_k > 8:
            raise ConfigError("ablation_k must be in 0..8")
        if self.exog_future not in ("observed", "freeze"):
            raise ConfigError(f"unknown exog_future mode {self.exog_future!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _parse_model_entry(raw, backends: dict[str, list[str]]) -> ModelEntry:
    if isinstance(raw, str):
        if raw == "naive":
            return ModelEntry(name="naive", backend_argv=())
        if raw in backends:
            return ModelEntry(name=raw, backend_argv=tuple(backends[raw]))
        if raw.upper() in TSA_KIND_NAMES | BAYES_KIND_NAMES:
            return ModelEntry(name=raw.upper(), kind=raw.upper())
        raise ConfigError(f"unknown model {raw!r}: not a kind, not a configured backend")
    if isinstance(raw, dict):
        kind = raw.get("kind", "").upper()
        if kind not in TSA_KIND_NAMES | BAYES_KIND_NAMES:
            raise ConfigError(f"model entry needs a native kind, got {raw!r}")
        order = tuple(raw["order"]) if "order" in raw else None
        seasonal = tuple(raw["seasonal"]) if "seasonal" in raw else None
        return ModelEntry(name=raw.get("name", kind), kind=kind, order=order, seasonal=seasonal)
    raise ConfigError(f"unparseable model entry {raw!r}")


def load_config(path: str | Path) -> RunConfig:
    """Read a JSON config; relative paths resolve against the config location."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    backends = {name: list(argv) for name, argv in raw.get("backends", {}).items()}
    try:
        config = RunConfig(
            projects=list(raw["projects"]),
            windows=list(raw["windows"]),
            models=[_parse_model_entry(m, backends) for m in raw["models"]],
            horizons=tuple(raw.get("horizons", DEFAULT_HORIZONS)),
            alpha=float(raw.get("alpha", 0.01)),
            seed=int(raw.get("seed", 0)),
            output_dir=raw.get("output_dir", "out"),
            ablation_k=int(raw.get("ablation_k", 0)),
            mining_filter_now=raw.get("mining_filter_now"),
            exog_future=raw.get("exog_future", "observed"),
            workers=int(raw.get("workers", 1)),
            base_dir=path.parent,
        )
    except KeyError as exc:
        raise ConfigError(f"config {path}: missing field {exc}") from None
    config.validate()
    return config


def _config_hash(config: RunConfig) -> str:
    payload = {
        "projects": config.projects,
        "windows": config.windows,
        "models": [
            {
                "name": m.name,
                "kind": m.kind,
                "order": m.order,
                "seasonal": m.seasonal,
                "backend": list(m.backend_argv) if m.backend_argv is not None else None,
            }
            for m in config.models
        ],
        "horizons": list(config.horizons),
        "alpha": config.alpha,
        "seed": config.seed,
        "ablation_k": config.ablation_k,
        "mining_filter_now": config.mining_filter_now,
        "exog_future": config.exog_future,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _data_digest(project_dirs: list[Path]) -> str:
    digest = hashlib.sha256()
    for root in project_dirs:
        for name in ("commits.csv", "versions.csv", "issues.csv", "meta.json"):
            path = root / name
            if path.is_file():
                digest.update(name.encode())
                digest.update(path.read_bytes())
    return digest.hexdigest()


def _spec_for(entry: ModelEntry, panel, seed: int) -> ModelSpec:
    kind = Kind.parse(entry.kind)
    season = panel.grid.length.season
    if entry.order is None and kind in (Kind.ARIMA, Kind.ARIMAX, Kind.SARIMA, Kind.SARIMAX):
        # search once, leak-free, on the initial training prefix
        initial = plan_walk_forward(len(panel), (1,)).initial_train
        return select_order(panel.head(initial), kind, seed=seed)
    return ModelSpec.for_kind(
        kind,
        order=entry.order or (0, 0, 0),
        seasonal=entry.seasonal,
        seasonal_period=season,
    )


def run_pipeline(config: RunConfig) -> StudyReport:
    config.validate()
    out_dir = (config.base_dir / config.output_dir).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    report = StudyReport()
    notes = report.notes

    project_dirs = [(config.base_dir / p).resolve() for p in config.projects]
    report.provenance = {
        "config_hash": _config_hash(config),
        "data_digest": _data_digest(project_dirs),
        "seed": config.seed,
        "alpha": config.alpha,
        "version": __version__,
    }

    # ---------------------------------------------------------- ingest + label
    projects = []
    for root in project_dirs:
        project = load_project(root)
        if config.mining_filter_now is not None and not passes_mining_filter(
            project.meta, config.mining_filter_now
        ):
            notes.append(f"{project.name}: excluded by the mining filter")
            continue
        projects.append(project)
    if not projects:
        raise ConfigError("no projects left after filtering")

    panels: dict[tuple[str, str], object] = {}
    for project in projects:
        proj_out = out_dir / project.name
        proj_out.mkdir(parents=True, exist_ok=True)
        labeling = label_project(project)
        for warning in labeling.warnings:
            logger.warning("%s: %s", project.name, warning)
        write_defects_csv(labeling.defects, proj_out / "defects.csv")
        write_density_csv(labeling.density, proj_out / "density.csv")
        for window in config.windows:
            length = WindowLength.parse(window)
            try:
                panel = build_panel(project.commits, labeling.density, length)
            except EngineError as exc:
                notes.append(f"{project.name}/{length.label}: no panel ({exc})")
                continue
            panels[(project.name, length.label)] = panel
            write_panel_csv(panel, proj_out / f"panel_{length.label}.csv")

    # ------------------------------------------------------------ walk-forward
    # One task per (project, window, model); a task owning a subprocess
    # backend keeps it exclusive.  Results merge in sorted key order, so the
    # worker count never changes the output.
    def _evaluate(project_name, window, panel, entry):
        plan = plan_walk_forward(len(panel), config.horizons)
        seed = child_seed(config.seed, "walkforward", project_name, window, entry.name)
        backend = None
        try:
            if entry.backend_argv is not None:
                model = NaiveBackend() if entry.name == "naive" else SubprocessBackend(
                    list(entry.backend_argv), model=entry.name
                )
                backend = model
            else:
                model = _spec_for(entry, panel, seed)
            tuples = run_walk_forward(
                panel,
                model,
                plan,
                project=project_name,
                window=window,
                seed=seed,
                exog_future=config.exog_future,
            )
        finally:
            if backend is not None:
                backend.close()
        # report under the configured name, not the searched spec label
        return [replace(t, model=entry.name) for t in tuples]

    tasks = []
    for (project_name, window), panel in sorted(panels.items()):
        try:
            plan_walk_forward(len(panel), config.horizons)
        except EngineError as exc:
            notes.append(f"{project_name}/{window}: walk-forward skipped ({exc})")
            continue
        for entry in config.models:
            tasks.append((project_name, window, panel, entry))

    results: dict[tuple[str, str, str], list] = {}
    if config.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                pool.submit(_evaluate, p, w, panel, entry): (p, w, entry.name)
                for p, w, panel, entry in tasks
            }
            for future, key in futures.items():
                try:
                    results[key] = future.result()
                except EngineError as exc:
                    notes.append(f"{key[0]}/{key[1]}/{key[2]}: failed ({exc})")
    else:
        for p, w, panel, entry in tasks:
            try:
                results[(p, w, entry.name)] = _evaluate(p, w, panel, entry)
            except EngineError as exc:
                notes.append(f"{p}/{w}/{entry.name}: failed ({exc})")

    all_tuples = []
    for key in sorted(results):
        all_tuples.extend(results[key])

    if not all_tuples:
        raise ConfigError("no forecasts were produced; nothing to analyze")
    write_forecasts_csv(all_tuples, out_dir / "forecasts.csv")
    report.reliability = {
        f"{model}/{window}": flag
        for (model, window), flag in reliability_flags(all_tuples).items()
    }

    # ------------------------------------------------------------ error records
    records = []
    for project_name in sorted({t.project for t in all_tuples}):
        project_tuples = [t for t in all_tuples if t.project == project_name and not t.failed]
        if not project_tuples:
            continue
        for record in summarize(project_tuples):
            records.append((project_name, record))
    record_rows = [
        {
            "project": project_name,
            "model": r.model,
            "window": r.window,
            "horizon": r.horizon,
            "mape": r.mape,
            "mae": r.mae,
            "rmse": r.rmse,
            "n_forecasts": r.n_forecasts,
        }
        for project_name, r in records
    ]
    report.rq1 = {"records": record_rows, "source": "errors.csv"}

    # ------------------------------------------------------------- statistics
    analyses = {}
    h1_01 = h1_02 = None
    model_names = sorted({row["model"] for row in record_rows})
    for metric in ("mape", "mae", "rmse"):
        groups, labels = [], []
        for model in model_names:
            values = [row[metric] for row in record_rows if row["model"] == model and row[metric] is not None]
            if values:
                groups.append(values)
                labels.append(model)
        if len(groups) < 2 or any(len(g) < 3 for g in groups):
            notes.append(f"stats[{metric}]: not enough error records to compare models")
            continue
        try:
            analysis = route_analysis(groups, labels=labels, alpha=config.alpha)
        except EngineError as exc:
            notes.append(f"stats[{metric}]: {exc}")
            continue
        analyses[metric] = analysis
        if metric == "mae":  # headline metric for the hypothesis outcomes
            h1_01 = report_payload(analysis)["omnibus"]
            if analysis.posthoc is not None:
                adj = analysis.posthoc.adjusted_p
                pairs = [
                    {
                        "a": analysis.posthoc.labels[i],
                        "b": analysis.posthoc.labels[j],
                        "p_value": float(adj[i, j]),
                    }
                    for i in range(len(analysis.posthoc.labels))
                    for j in range(i + 1, len(analysis.posthoc.labels))
                ]
                significant = [p for p in pairs if p["p_value"] < config.alpha]
                h1_02 = {
                    "name": analysis.posthoc.method,
                    "p_value": min((p["p_value"] for p in pairs), default=None),
                    "reject_null": bool(significant),
                    "pairs": pairs,
                }
    write_stats_json(analyses, out_dir / "stats.json", alpha=config.alpha)
    report.rq2 = {
        "source": "errors.csv",
        "analyses": {metric: report_payload(a) for metric, a in analyses.items()},
        "h1_01": h1_01,
        "h1_02": h1_02,
    }

    # ------------------------------------------------------------- importance
    importance_rows = []
    consensus_rows = []
    consensus_by_panel: dict[tuple[str, str], list[str]] = {}
    for (project_name, window), panel in sorted(panels.items()):
        seed = child_seed(config.seed, "importance", project_name, window)
        try:
            rankings = all_importances(panel, seed=seed)
        except EngineError as exc:
            notes.append(f"importance {project_name}/{window}: skipped ({exc})")
            continue
        ordered = consensus_ranking(rankings, feature_order=list(panel.feature_names))
        consensus_by_panel[(project_name, window)] = ordered
        importance_rows.extend((project_name, window, r) for r in rankings)
        consensus_rows.append((project_name, window, ordered))
    write_importance_csv(importance_rows, out_dir / "importance.csv")
    write_consensus_csv(consensus_rows, out_dir / "consensus.csv")
    report.rq3 = {
        "source": "importance.csv",
        "consensus": [
            {"project": p, "window": w, "features": ordered} for p, w, ordered in consensus_rows
        ],
    }

    # --------------------------------------------------------------- ablation
    report.rq4 = {"source": "ablation.csv", "h4_01": None, "results": []}
    ablation_rows = []
    if config.ablation_k >= 1:
        best = _best_exogenous(record_rows, config, notes)
        if best is not None:
            best_model, best_window = best
            entry = next(m for m in config.models if m.name == best_model)
            h4_payload = None
            for (project_name, window), panel in sorted(panels.items()):
                if window != best_window or (project_name, window) not in consensus_by_panel:
                    continue
                seed = child_seed(config.seed, "ablation", project_name, window)
                try:
                    plan = plan_walk_forward(len(panel), config.horizons)
                    spec = _spec_for(entry, panel, seed)
                    subset_runs = run_ablation(
                        panel,
                        spec,
                        plan,
                        consensus_by_panel[(project_name, window)],
                        config.ablation_k,
                        seed=seed,
                        project=project_name,
                        window=window,
                    )
                except EngineError as exc:
                    notes.append(f"ablation {project_name}/{window}: skipped ({exc})")
                    continue
                full = subset_runs[0]
                for result in subset_runs:
                    p_value = None
                    if result.removed:
                        try:
                            outcome = test_ablation_significance(
                                full.abs_errors, result.abs_errors, alpha=config.alpha
                            )
                            p_value = outcome.p_value
                            if len(result.removed) == config.ablation_k and h4_payload is None:
                                h4_payload = {
                                    "name": outcome.name,
                                    "p_value": outcome.p_value,
                                    "reject_null": outcome.reject_null,
                                    "note": outcome.note,
                                    "project": project_name,
                                }
                        except EngineError as exc:
                            notes.append(
                                f"ablation {project_name}/{window} {result.removed}: no test ({exc})"
                            )
                    ablation_rows.append((project_name, window, result, p_value))
            report.rq4["h4_01"] = h4_payload
            report.rq4["results"] = [
                {
                    "project": p,
                    "window": w,
                    "removed": list(r.removed),
                    "mae": r.record.mae,
                    "rmse": r.record.rmse,
                    "delta_mae": r.delta_mae,
                    "delta_rmse": r.delta_rmse,
                    "p_value": p_value,
                }
                for p, w, r, p_value in ablation_rows
            ]
    write_ablation_csv(ablation_rows, out_dir / "ablation.csv")

    emit_report(report, "json", out_dir)
    emit_report(report, "csv", out_dir)
    emit_report(report, "markdown", out_dir)
    return report


def _best_exogenous(record_rows, config: RunConfig, notes) -> tuple[str, str] | None:
    """Best (model, window) by mean MAE, restricted to exogenous-capable models."""
    exo_names = {
        m.name
        for m in config.models
        if m.kind in ("ARIMAX", "SARIMAX", "BDLM", "BDGLM")
    }
    if not exo_names:
        notes.append("ablation skipped: no exogenous-capable model configured")
        return None
    scores: dict[tuple[str, str], list[float]] = {}
    for row in record_rows:
        if row["model"] in exo_names:
            scores.setdefault((row["model"], row["window"]), []).append(row["mae"])
    if not scores:
        notes.append("ablation skipped: exogenous models produced no error records")
        return None
    ranked = sorted(scores.items(), key=lambda kv: (sum(kv[1]) / len(kv[1]), kv[0]))
    best_overall = None
    all_scores: dict[tuple[str, str], list[float]] = {}
    for row in record_rows:
        all_scores.setdefault((row["model"], row["window"]), []).append(row["mae"])
    overall = sorted(all_scores.items(), key=lambda kv: (sum(kv[1]) / len(kv[1]), kv[0]))
    if overall and overall[0][0] not in scores:
        best_overall = overall[0][0]
        notes.append(
            f"ablation: best model {best_overall[0]} is not exogenous-capable; "
            f"using best exogenous model {ranked[0][0][0]} instead"
        )
    return ranked[0][0]
