"""Project ingestion: commit histories, version tags, issue tickets, repo metadata.

A project lives in a directory of UTF-8 CSV tables plus one JSON file:

* ``commits.csv``  -- id, timestamp, is_fix, issue_keys, then one column per
  metric.  The metric column order defines the project's canonical feature
  order.  ``issue_keys`` is a ``;``-separated list cell (possibly empty).
* ``versions.csv`` -- name, release_time.
* ``issues.csv``   -- key, open_time, affected_versions, fix_commit_ids
  (list cells ``;``-separated).
* ``meta.json``    -- archived, fork, last_activity, contributors, stars.

Timestamps are integer epoch seconds (UTC).  Everything returned by
:func:`load_project` is immutable and safe to share across workers.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LoadError, SchemaError

SIX_MONTHS_SECONDS = 180 * 86400  # "six months" read as 180 days
MIN_CONTRIBUTORS = 3
MIN_STARS = 50

_COMMIT_FIXED_COLUMNS = ["id", "timestamp", "is_fix", "issue_keys"]


@dataclass(frozen=True)
class CommitRecord:
    """One commit: identity, time, fix flag, issue links, and its metric vector."""

    id: str
    timestamp: int
    is_fix: bool
    issue_keys: tuple[str, ...]
    metrics: dict[str, float]


@dataclass(frozen=True)
class VersionTag:
    name: str
    release_time: int
    ordinal: int  # 1-based, assigned by release order


@dataclass(frozen=True)
class IssueTicket:
    key: str
    open_time: int
    affected_versions: tuple[str, ...] | None
    fix_commit_ids: tuple[str, ...]


@dataclass(frozen=True)
class RepoMeta:
    archived: bool
    fork: bool
    last_activity: int
    contributors: int
    stars: int


@dataclass(frozen=True)
class Project:
    """A fully loaded, immutable project."""

    name: str
    commits: tuple[CommitRecord, ...]
    tags: tuple[VersionTag, ...]
    issues: tuple[IssueTicket, ...]
    meta: RepoMeta

    @property
    def feature_names(self) -> tuple[str, ...]:
        if not self.commits:
            return ()
        return tuple(self.commits[0].metrics.keys())


@dataclass
class FixMatch:
    """Result of joining fix commits against issue tickets."""

    pairs: list[tuple[str, str]]  # (commit id, issue key)
    unmatched_fixes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _parse_bool(cell: str) -> bool:
    value = cell.strip().lower()
    if value in ("true", "1"):
        return True
    if value in ("false", "0", ""):
        return False
    raise ValueError(f"not a boolean: {cell!r}")


def _parse_list(cell: str) -> tuple[str, ...]:
    cell = cell.strip()
    if not cell:
        return ()
    return tuple(part for part in cell.split(";") if part)


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.is_file():
        raise LoadError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"empty file: {path}") from None
        return header, list(reader)


def _load_commits(path: Path) -> list[CommitRecord]:
    header, rows = _read_rows(path)
    if header[: len(_COMMIT_FIXED_COLUMNS)] != _COMMIT_FIXED_COLUMNS:
        raise SchemaError(
            f"{path}: expected leading columns {_COMMIT_FIXED_COLUMNS}, got {header[:4]}"
        )
    metric_names = header[len(_COMMIT_FIXED_COLUMNS) :]
    commits: list[CommitRecord] = []
    incomplete: list[str] = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise LoadError(f"{path}: row {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            cid = row[0]
            timestamp = int(row[1])
            is_fix = _parse_bool(row[2])
            issue_keys = _parse_list(row[3])
        except ValueError as exc:
            raise LoadError(f"{path}: row {lineno}: {exc}") from None
        metrics: dict[str, float] = {}
        missing = False
        for name, cell in zip(metric_names, row[4:]):
            if cell.strip() == "":
                missing = True
                continue
            try:
                metrics[name] = float(cell)
            except ValueError:
                raise LoadError(f"{path}: row {lineno}: bad metric value {cell!r}") from None
        if missing:
            incomplete.append(cid)
            continue
        commits.append(CommitRecord(cid, timestamp, is_fix, issue_keys, metrics))
    if incomplete:
        raise SchemaError(f"{path}: commits with missing metric values: {', '.join(incomplete)}")
    seen: set[str] = set()
    for c in commits:
        if c.id in seen:
            raise SchemaError(f"{path}: duplicate commit id {c.id!r}")
        seen.add(c.id)
    commits.sort(key=lambda c: (c.timestamp, c.id))
    return commits


def _load_versions(path: Path) -> list[VersionTag]:
    header, rows = _read_rows(path)
    if header != ["name", "release_time"]:
        raise SchemaError(f"{path}: expected header name,release_time, got {header}")
    raw: list[tuple[str, int]] = []
    for lineno, row in enumerate(rows, start=2):
        try:
            raw.append((row[0], int(row[1])))
        except (IndexError, ValueError):
            raise LoadError(f"{path}: row {lineno}: unparseable version row") from None
    times = [t for _, t in raw]
    if len(set(times)) != len(times):
        raise SchemaError(f"{path}: duplicate release_time values; release order is ambiguous")
    raw.sort(key=lambda item: item[1])
    return [VersionTag(name, t, ordinal) for ordinal, (name, t) in enumerate(raw, start=1)]


def _load_issues(path: Path) -> list[IssueTicket]:
    header, rows = _read_rows(path)
    expected = ["key", "open_time", "affected_versions", "fix_commit_ids"]
    if header != expected:
        raise SchemaError(f"{path}: expected header {expected}, got {header}")
    issues: list[IssueTicket] = []
    for lineno, row in enumerate(rows, start=2):
        try:
            affected = _parse_list(row[2])
            issues.append(
                IssueTicket(
                    key=row[0],
                    open_time=int(row[1]),
                    affected_versions=affected if affected else None,
                    fix_commit_ids=_parse_list(row[3]),
                )
            )
        except (IndexError, ValueError):
            raise LoadError(f"{path}: row {lineno}: unparseable issue row") from None
    return issues


def _load_meta(path: Path) -> RepoMeta:
    if not path.is_file():
        raise LoadError(f"missing file: {path}")
    with path.open(encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}: {exc}") from None
    try:
        meta = RepoMeta(
            archived=bool(raw["archived"]),
            fork=bool(raw["fork"]),
            last_activity=int(raw["last_activity"]),
            contributors=int(raw["contributors"]),
            stars=int(raw["stars"]),
        )
    except KeyError as exc:
        raise SchemaError(f"{path}: missing field {exc}") from None
    if meta.contributors < 0 or meta.stars < 0:
        raise SchemaError(f"{path}: counts must be non-negative")
    return meta


def load_project(dir_path: str | Path) -> Project:
    """Load one project directory into immutable records.

    Commits come back sorted by timestamp, version ordinals are assigned by
    release order, and every issue's version names are checked against the
    tag list.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise LoadError(f"missing project directory: {root}")
    commits = _load_commits(root / "commits.csv")
    tags = _load_versions(root / "versions.csv")
    issues = _load_issues(root / "issues.csv")
    meta = _load_meta(root / "meta.json")

    known_versions = {t.name for t in tags}
    for issue in issues:
        if issue.affected_versions:
            unknown = [v for v in issue.affected_versions if v not in known_versions]
            if unknown:
                raise SchemaError(
                    f"issue {issue.key}: unknown affected versions {', '.join(unknown)}"
                )
    return Project(
        name=root.name,
        commits=tuple(commits),
        tags=tuple(tags),
        issues=tuple(issues),
        meta=meta,
    )


def save_project(dir_path: str | Path, project: Project) -> None:
    """Write a project back in the on-disk format read by :func:`load_project`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    feature_names = list(project.feature_names)
    with (root / "commits.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COMMIT_FIXED_COLUMNS + feature_names)
        for c in project.commits:
            writer.writerow(
                [
                    c.id,
                    c.timestamp,
                    "true" if c.is_fix else "false",
                    ";".join(c.issue_keys),
                ]
                + [repr(c.metrics[name]) for name in feature_names]
            )
    with (root / "versions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "release_time"])
        for t in sorted(project.tags, key=lambda t: t.ordinal):
            writer.writerow([t.name, t.release_time])
    with (root / "issues.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["key", "open_time", "affected_versions", "fix_commit_ids"])
        for issue in project.issues:
            writer.writerow(
                [
                    issue.key,
                    issue.open_time,
                    ";".join(issue.affected_versions or ()),
                    ";".join(issue.fix_commit_ids),
                ]
            )
    meta = project.meta
    with (root / "meta.json").open("w", encoding="utf-8") as fh:
        json.dump(
            {
                "archived": meta.archived,
                "fork": meta.fork,
                "last_activity": meta.last_activity,
                "contributors": meta.contributors,
                "stars": meta.stars,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def passes_mining_filter(meta: RepoMeta, now: int) -> bool:
    """Repository selection filter: active, non-fork, non-archived, enough traction."""
    return (
        not meta.archived
        and not meta.fork
        and (now - meta.last_activity) < SIX_MONTHS_SECONDS
        and meta.contributors >= MIN_CONTRIBUTORS
        and meta.stars >= MIN_STARS
    )


def identify_fix_commits(
    commits: tuple[CommitRecord, ...] | list[CommitRecord],
    issues: tuple[IssueTicket, ...] | list[IssueTicket],
) -> FixMatch:
    """Join fix-flagged commits against issue tickets.

    A (commit, issue) pair is emitted when the commit carries the fix flag and
    the issue links to it, either through the issue's explicit
    ``fix_commit_ids`` or through the commit's ``issue_keys``.  Links that
    cannot be honored are reported as warnings instead of failing the join:
    explicit links to unknown or non-fix commits are skipped, and fix commits
    that no issue claims end up in ``unmatched_fixes``.
    """
    by_id = {c.id: c for c in commits}
    issue_keys = {i.key for i in issues}
    linked: dict[str, set[str]] = {}
    warnings: list[str] = []

    for issue in issues:
        for cid in issue.fix_commit_ids:
            commit = by_id.get(cid)
            if commit is None:
                warnings.append(f"issue {issue.key}: unknown fix commit {cid!r}, pair skipped")
                continue
            if not commit.is_fix:
                warnings.append(
                    f"issue {issue.key}: fix_commit_ids names commit {cid!r} "
                    "whose fix flag is false, pair skipped"
                )
                continue
            linked.setdefault(cid, set()).add(issue.key)
    for commit in commits:
        if not commit.is_fix:
            continue
        for key in commit.issue_keys:
            if key in issue_keys:
                linked.setdefault(commit.id, set()).add(key)
            else:
                warnings.append(f"commit {commit.id}: unknown issue key {key!r}")

    pairs: list[tuple[str, str]] = []
    unmatched: list[str] = []
    for commit in commits:  # commits already sorted by timestamp
        if not commit.is_fix:
            continue
        keys = linked.get(commit.id)
        if keys:
            pairs.extend((commit.id, key) for key in sorted(keys))
        else:
            unmatched.append(commit.id)
    return FixMatch(pairs=pairs, unmatched_fixes=unmatched, warnings=warnings)


def version_of(timestamp: int, tags: tuple[VersionTag, ...] | list[VersionTag]) -> int:
    """Map an event time to a version ordinal.

    Returns the smallest ordinal whose release_time is >= timestamp (an event
    exactly at a release belongs to that release).  Events after the last
    release map to the synthetic trailing ordinal ``k + 1``.
    """
    if not tags:
        raise ValueError("version_of requires at least one version tag")
    ordered = sorted(tags, key=lambda t: t.ordinal)
    release_times = [t.release_time for t in ordered]
    idx = bisect_left(release_times, timestamp)
    return ordered[idx].ordinal if idx < len(ordered) else ordered[-1].ordinal + 1
