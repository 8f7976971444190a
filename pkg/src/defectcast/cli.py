"""Command-line entry points: run, synth, label, forecast, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import EngineError
from .ingest import load_project
from .lifecycle import label_project, write_defects_csv, write_density_csv
from .models import Kind, ModelSpec, NaiveBackend, select_order
from .panel import WindowLength, build_panel
from .pipeline import load_config, run_pipeline
from .report import FORMATS, StudyReport, emit_report
from .synth import SynthParams, synth_project
from .walkforward import plan_walk_forward, run_walk_forward, write_forecasts_csv


def _cmd_run(args) -> int:
    config = load_config(args.config)
    report = run_pipeline(config)
    out = (config.base_dir / config.output_dir).resolve()
    print(f"report written under {out}")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def _cmd_synth(args) -> int:
    params = SynthParams(
        days=args.days,
        commits_per_day=args.rate,
        n_features=args.features,
        defect_rate=args.defect_rate,
        signal_strength=args.signal,
        proportion=args.proportion,
    )
    truth = synth_project(args.seed, params, args.out)
    print(f"wrote synthetic project with {len(truth.defects)} defects to {args.out}")
    return 0


def _cmd_label(args) -> int:
    project = load_project(args.project)
    labeling = label_project(project)
    out = Path(args.out or args.project)
    write_defects_csv(labeling.defects, out / "defects.csv")
    write_density_csv(labeling.density, out / "density.csv")
    print(
        f"{len(labeling.defects)} defects labeled "
        f"(stable proportion {labeling.proportion.p:.4f} from {labeling.proportion.sample_count} explicit IVs)"
    )
    for warning in labeling.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_forecast(args) -> int:
    project = load_project(args.project)
    labeling = label_project(project)
    panel = build_panel(project.commits, labeling.density, WindowLength.parse(args.window))
    plan = plan_walk_forward(len(panel), tuple(args.horizons))
    if args.model == "naive":
        model = NaiveBackend()
    else:
        kind = Kind.parse(args.model)
        if args.order:
            p, d, q = (int(v) for v in args.order.split(","))
            model = ModelSpec.for_kind(kind, order=(p, d, q), seasonal_period=panel.grid.length.season)
        elif kind in (Kind.ARIMA, Kind.ARIMAX, Kind.SARIMA, Kind.SARIMAX):
            model = select_order(panel.head(plan.initial_train), kind, seed=args.seed)
        else:
            model = ModelSpec.for_kind(kind, seasonal_period=panel.grid.length.season)
    tuples = run_walk_forward(panel, model, plan, project=project.name, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.project) / "forecasts.csv"
    write_forecasts_csv(tuples, out)
    ok = [t for t in tuples if not t.failed]
    print(f"wrote {len(tuples)} forecasts ({len(tuples) - len(ok)} failed) to {out}")
    return 0


def _cmd_report(args) -> int:
    report_path = Path(args.input) / "report.json"
    data = json.loads(report_path.read_text(encoding="utf-8"))
    files = emit_report(StudyReport.from_dict(data), args.format, args.input)
    for path in files:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defectcast", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("synth", help="generate a seeded synthetic project")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--defect-rate", type=float, default=0.08)
    p.add_argument("--signal", type=float, default=2.0)
    p.add_argument("--proportion", type=float, default=1.5)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("label", help="label defect lifecycles for one project")
    p.add_argument("--project", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_label)

    p = sub.add_parser("forecast", help="walk-forward forecasts for one project")
    p.add_argument("--project", required=True)
    p.add_argument("--model", required=True, help="model kind or 'naive'")
    p.add_argument("--window", required=True, choices=[w.label for w in WindowLength])
    p.add_argument("--horizons", type=int, nargs="+", default=[1])
    p.add_argument("--order", help="pinned p,d,q (skips the order search)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_forecast)

    p = sub.add_parser("report", help="re-emit a saved report in another format")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", required=True, choices=FORMATS)
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
