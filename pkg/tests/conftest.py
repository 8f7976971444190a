from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from defectcast.ingest import load_project
from defectcast.panel import TimeSeriesPanel, WindowGrid, WindowLength

START = 1577836800  # 2020-01-01T00:00:00Z
DAY = 86400


def write_project(
    root: Path,
    commits: list[tuple],  # (id, timestamp, is_fix, issue_keys, metric values...)
    versions: list[tuple[str, int]],
    issues: list[tuple],  # (key, open_time, affected_versions, fix_commit_ids)
    meta: dict | None = None,
    metric_names: tuple[str, ...] = ("m1", "m2"),
) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    lines = ["id,timestamp,is_fix,issue_keys," + ",".join(metric_names)]
    for c in commits:
        cid, ts, is_fix, keys, *metrics = c
        lines.append(
            f"{cid},{ts},{'true' if is_fix else 'false'},{';'.join(keys)},"
            + ",".join(str(v) for v in metrics)
        )
    (root / "commits.csv").write_text("\n".join(lines) + "\n")
    lines = ["name,release_time"] + [f"{name},{ts}" for name, ts in versions]
    (root / "versions.csv").write_text("\n".join(lines) + "\n")
    lines = ["key,open_time,affected_versions,fix_commit_ids"]
    for key, open_time, affected, fixes in issues:
        lines.append(f"{key},{open_time},{';'.join(affected)},{';'.join(fixes)}")
    (root / "issues.csv").write_text("\n".join(lines) + "\n")
    meta = meta or {
        "archived": False,
        "fork": False,
        "last_activity": max((c[1] for c in commits if isinstance(c[1], int)), default=START),
        "contributors": 5,
        "stars": 100,
    }
    (root / "meta.json").write_text(json.dumps(meta))
    return root


@pytest.fixture
def small_project(tmp_path):
    """Three versions, six commits, two linked defects, one unmatched fix."""
    root = write_project(
        tmp_path / "proj",
        commits=[
            ("c1", START + 5 * DAY, False, [], 1.0, 10.0),
            ("c2", START + 20 * DAY, False, [], 2.0, 11.0),
            ("c3", START + 40 * DAY, True, ["BUG-1"], 3.0, 12.0),
            ("c4", START + 65 * DAY, False, [], 4.0, 13.0),
            ("c5", START + 80 * DAY, True, [], 5.0, 14.0),  # fix without any issue link
            ("c6", START + 85 * DAY, True, [], 6.0, 15.0),
        ],
        versions=[("v1", START + 30 * DAY), ("v2", START + 60 * DAY), ("v3", START + 90 * DAY)],
        issues=[
            ("BUG-1", START + 10 * DAY, ["v1", "v2"], []),
            ("BUG-2", START + 70 * DAY, [], ["c6"]),
        ],
    )
    return load_project(root)


@pytest.fixture
def make_panel():
    """Factory building an in-memory panel from raw arrays."""

    def build(target, features=None, names=None, window="monthly", start=START):
        target = np.asarray(target, dtype=float)
        n = len(target)
        if features is None:
            features = np.zeros((n, 0))
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if names is None:
            names = tuple(f"f{i + 1}" for i in range(features.shape[1]))
        length = WindowLength.parse(window)
        grid = WindowGrid(length=length, start=start, n_windows=n)
        return TimeSeriesPanel(
            grid=grid,
            target=target,
            features=features,
            interpolated=np.zeros(n, dtype=bool),
            feature_names=tuple(names),
        )

    return build
