"""Serialize irregular commit activity into regular-interval panels.

Commits are bucketed onto an equal-width window grid (weekly, bi-weekly, or
monthly, with a month fixed at 30 days so the spacing stays equal), each
window is aggregated into one observation, and windows without commits are
filled by per-coordinate linear interpolation between their non-empty
neighbors.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import PanelError
from .ingest import CommitRecord
from .lifecycle import DefectDensitySeries

MIN_FIT_LENGTH = 8  # smallest panel any grid-searched model is identifiable on

DAY = 86400


class WindowLength(enum.Enum):
    WEEKLY = ("weekly", 7 * DAY, 52)
    BIWEEKLY = ("biweekly", 14 * DAY, 26)
    MONTHLY = ("monthly", 30 * DAY, 12)

    def __init__(self, label: str, seconds: int, season: int):
        self.label = label
        self.seconds = seconds
        self.season = season  # windows per year, used as the seasonal period

    @classmethod
    def parse(cls, value: "WindowLength | str") -> "WindowLength":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.label == value:
                return member
        raise ValueError(f"unknown window length {value!r}")


@dataclass(frozen=True)
class WindowGrid:
    length: WindowLength
    start: int  # epoch seconds, midnight UTC on the first commit's day
    n_windows: int

    @property
    def boundaries(self) -> list[tuple[int, int]]:
        step = self.length.seconds
        return [
            (self.start + i * step, self.start + (i + 1) * step)
            for i in range(self.n_windows)
        ]

    def index_of(self, timestamp: int) -> int:
        idx = (timestamp - self.start) // self.length.seconds
        if idx < 0 or idx >= self.n_windows:
            raise ValueError(f"timestamp {timestamp} outside grid")
        return int(idx)


@dataclass(frozen=True)
class Observation:
    target: float
    features: tuple[float, ...]
    interpolated: bool


@dataclass(frozen=True)
class TimeSeriesPanel:
    grid: WindowGrid
    target: np.ndarray  # (n,)
    features: np.ndarray  # (n, p)
    interpolated: np.ndarray  # (n,) bool
    feature_names: tuple[str, ...]

    def __len__(self) -> int:
        return int(self.target.shape[0])

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(self.target[i]), tuple(self.features[i]), bool(self.interpolated[i]))
            for i in range(len(self))
        ]

    def head(self, n: int) -> "TimeSeriesPanel":
        """The first ``n`` observations; the standard training view."""
        return replace(
            self,
            target=self.target[:n],
            features=self.features[:n],
            interpolated=self.interpolated[:n],
        )

    def window(self, start: int, stop: int) -> "TimeSeriesPanel":
        """Observations [start, stop); used by sliding-window evaluation."""
        return replace(
            self,
            grid=replace(self.grid, start=self.grid.start + start * self.grid.length.seconds),
            target=self.target[start:stop],
            features=self.features[start:stop],
            interpolated=self.interpolated[start:stop],
        )

    def drop_features(self, names) -> "TimeSeriesPanel":
        removed = set(names)
        unknown = removed - set(self.feature_names)
        if unknown:
            raise ValueError(f"unknown features: {sorted(unknown)}")
        keep = [i for i, name in enumerate(self.feature_names) if name not in removed]
        return replace(
            self,
            features=self.features[:, keep],
            feature_names=tuple(self.feature_names[i] for i in keep),
        )


def build_grid(commits: list[CommitRecord] | tuple[CommitRecord, ...], length) -> WindowGrid:
    """Grid of equal windows anchored at the first commit's midnight UTC."""
    length = WindowLength.parse(length)
    if not commits:
        raise PanelError("cannot build a grid from an empty commit list")
    first = min(c.timestamp for c in commits)
    last = max(c.timestamp for c in commits)
    start = (first // DAY) * DAY
    n_windows = int((last - start) // length.seconds) + 1
    return WindowGrid(length=length, start=start, n_windows=n_windows)


def aggregate_window(
    commits_in_window: list[CommitRecord],
    density: DefectDensitySeries,
    feature_names: tuple[str, ...],
    feature_agg: str = "mean",
) -> Observation | None:
    """One observation per window: density at the last commit, aggregated features.

    The default feature aggregate is the mean (scale-stable across windows of
    varying commit counts); ``sum`` and ``last`` are available alternatives.
    """
    if not commits_in_window:
        return None
    ordered = sorted(commits_in_window, key=lambda c: (c.timestamp, c.id))
    target = float(density.count_at(ordered[-1].id))
    matrix = np.array([[c.metrics[name] for name in feature_names] for c in ordered])
    if feature_agg == "mean":
        features = matrix.mean(axis=0)
    elif feature_agg == "sum":
        features = matrix.sum(axis=0)
    elif feature_agg == "last":
        features = matrix[-1]
    else:
        raise ValueError(f"unknown feature aggregate {feature_agg!r}")
    return Observation(target=target, features=tuple(features), interpolated=False)


def interpolate_gaps(
    raw: list[Observation | None],
    grid: WindowGrid,
    feature_names: tuple[str, ...],
) -> TimeSeriesPanel:
    """Fill internal empty windows linearly and trim empty edges."""
    filled_idx = [i for i, obs in enumerate(raw) if obs is not None]
    if len(filled_idx) < 2:
        raise PanelError("insufficient activity: need at least 2 non-empty windows")
    lo, hi = filled_idx[0], filled_idx[-1]
    window = raw[lo : hi + 1]
    n = len(window)
    p = len(feature_names)
    target = np.empty(n)
    features = np.empty((n, p))
    interpolated = np.zeros(n, dtype=bool)

    for i, obs in enumerate(window):
        if obs is not None:
            target[i] = obs.target
            features[i] = obs.features

    anchors = [i for i, obs in enumerate(window) if obs is not None]
    for left, right in zip(anchors, anchors[1:]):
        gap = right - left
        if gap == 1:
            continue
        for k in range(1, gap):
            frac = k / gap
            idx = left + k
            target[idx] = target[left] + (target[right] - target[left]) * frac
            features[idx] = features[left] + (features[right] - features[left]) * frac
            interpolated[idx] = True

    trimmed = replace(grid, start=grid.start + lo * grid.length.seconds, n_windows=n)
    return TimeSeriesPanel(
        grid=trimmed,
        target=target,
        features=features,
        interpolated=interpolated,
        feature_names=feature_names,
    )


def build_panel(
    commits: list[CommitRecord] | tuple[CommitRecord, ...],
    density: DefectDensitySeries,
    length,
    feature_agg: str = "mean",
) -> TimeSeriesPanel:
    """Compose grid construction, window aggregation, and gap interpolation."""
    grid = build_grid(commits, length)
    feature_names = tuple(commits[0].metrics.keys())
    buckets: list[list[CommitRecord]] = [[] for _ in range(grid.n_windows)]
    for c in commits:
        buckets[grid.index_of(c.timestamp)].append(c)
    raw = [aggregate_window(bucket, density, feature_names, feature_agg) for bucket in buckets]
    return interpolate_gaps(raw, grid, feature_names)


def write_panel_csv(panel: TimeSeriesPanel, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window_start", "interpolated", "target", *panel.feature_names])
        for i, (lo, _) in enumerate(panel.grid.boundaries):
            writer.writerow(
                [
                    lo,
                    "true" if panel.interpolated[i] else "false",
                    repr(float(panel.target[i])),
                    *(repr(float(v)) for v in panel.features[i]),
                ]
            )
