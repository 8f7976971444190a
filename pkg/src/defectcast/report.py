"""Study report assembly and serialization (JSON, CSV bundle, markdown)."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

FORMATS = ("json", "csv", "markdown")


@dataclass
class StudyReport:
    """Per-question results plus provenance; every table names the CSV it summarizes."""

    rq1: dict = field(default_factory=dict)  # error tables
    rq2: dict = field(default_factory=dict)  # horizon comparison + H1.01 / H1.02
    rq3: dict = field(default_factory=dict)  # importance rankings + consensus
    rq4: dict = field(default_factory=dict)  # ablation + H4.01
    reliability: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StudyReport":
        return cls(**{k: data.get(k, {} if k != "notes" else []) for k in (
            "rq1", "rq2", "rq3", "rq4", "reliability", "provenance", "notes"
        )})


def _error_rows(report: StudyReport) -> list[dict]:
    return report.rq1.get("records", [])


def _markdown_table(rows: list[dict], columns: list[str]) -> list[str]:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for row in rows:
        cells = []
        for col in columns:
            value = row.get(col)
            cells.append("" if value is None else (f"{value:.4f}" if isinstance(value, float) else str(value)))
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _hypothesis_line(name: str, payload: dict | None) -> str:
    if not payload:
        return f"- {name}: not evaluated"
    verdict = "rejected" if payload.get("reject_null") else "not rejected"
    p = payload.get("p_value")
    p_text = "n/a" if p is None else f"{p:.5f}"
    return f"- {name}: {verdict} (test {payload.get('name')}, p = {p_text})"


def render_markdown(report: StudyReport) -> str:
    lines = ["# Defect forecasting study report", ""]
    prov = report.provenance
    lines += [
        f"- config hash: `{prov.get('config_hash', '')}`",
        f"- data digest: `{prov.get('data_digest', '')}`",
        f"- seed: {prov.get('seed', '')}",
        f"- alpha: {prov.get('alpha', '')}",
        f"- engine version: {prov.get('version', '')}",
        "",
        "## RQ1: forecasting effectiveness",
        "",
        f"Source tables: `{report.rq1.get('source', 'errors.csv')}`, `forecasts.csv`.",
        "",
    ]
    rows = _error_rows(report)
    if rows:
        lines += _markdown_table(
            rows, ["project", "model", "window", "horizon", "mape", "mae", "rmse", "n_forecasts"]
        )
    else:
        lines.append("No successful forecasts were recorded.")
    lines += ["", "## RQ2: horizon effects and model differences", ""]
    lines.append(f"Source table: `{report.rq2.get('source', 'errors.csv')}`.")
    for metric, payload in sorted(report.rq2.get("analyses", {}).items()):
        lines.append(f"- metric `{metric}`: branch {payload.get('branch')}")
    lines.append(_hypothesis_line("H1.01 (no difference across models)", report.rq2.get("h1_01")))
    lines.append(_hypothesis_line("H1.02 (no pairwise difference)", report.rq2.get("h1_02")))
    lines += ["", "## RQ3: most informative symptoms", ""]
    lines.append(f"Source tables: `importance.csv`, `consensus.csv`.")
    for entry in report.rq3.get("consensus", []):
        top = ", ".join(entry.get("features", [])[:5])
        lines.append(f"- {entry.get('project')} / {entry.get('window')}: top features {top}")
    lines += ["", "## RQ4: ablation of top-ranked symptoms", ""]
    lines.append(f"Source table: `ablation.csv`.")
    lines.append(_hypothesis_line("H4.01 (no difference without top symptoms)", report.rq4.get("h4_01")))
    if report.notes:
        lines += ["", "## Notes", ""]
        lines += [f"- {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def emit_report(report: StudyReport, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write the report in one format; returns the files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / "report.json"
        with path.open("w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        return [path]
    if fmt == "markdown":
        path = out_dir / "report.md"
        path.write_text(render_markdown(report), encoding="utf-8")
        return [path]
    if fmt == "csv":
        path = out_dir / "errors.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["project", "model", "window", "horizon", "mape", "mae", "rmse", "n_forecasts"]
            )
            for row in _error_rows(report):
                writer.writerow(
                    [
                        row.get("project", ""),
                        row["model"],
                        row["window"],
                        row["horizon"],
                        "" if row.get("mape") is None else repr(row["mape"]),
                        repr(row["mae"]),
                        repr(row["rmse"]),
                        row["n_forecasts"],
                    ]
                )
        return [path]
    raise ConfigError(f"unknown report format {fmt!r} (expected one of {FORMATS})")
