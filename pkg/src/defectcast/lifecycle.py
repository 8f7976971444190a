"""Defect lifecycle reconstruction and the active-defect density series.

Each defect is anchored to three version ordinals: where it was injected
(IV), where its ticket was opened (OV), and where the fixing commit landed
(FV).  When the tracker does not record the injection version, it is
back-estimated from the project's stable proportion, the per-project mean of
(FV - IV) / (FV - OV) over defects whose injection version is known.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ingest import CommitRecord, IssueTicket, VersionTag, version_of

EXPLICIT = "explicit"
ESTIMATED = "estimated"


@dataclass(frozen=True)
class DefectRecord:
    """Lifecycle anchors for one defect; ``iv`` is None until estimated."""

    id: str
    fix_commit: str
    ov: int
    fv: int
    iv: int | None = None
    iv_provenance: str | None = None
    diagnostics: tuple[str, ...] = ()

    @property
    def anchored(self) -> bool:
        return self.iv is not None


@dataclass(frozen=True)
class StableProportion:
    p: float
    sample_count: int


@dataclass(frozen=True)
class DefectDensitySeries:
    """Active-defect count at every commit, in commit-time order."""

    commit_ids: tuple[str, ...]
    timestamps: tuple[int, ...]
    counts: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.counts)

    def count_at(self, commit_id: str) -> int:
        return self.counts[self.commit_ids.index(commit_id)]


def _round_half_away(x: float) -> int:
    # round() would round halves to even; labeling must be platform-stable
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def anchor_defect(
    pair: tuple[str, str],
    commits: tuple[CommitRecord, ...] | list[CommitRecord],
    issues: tuple[IssueTicket, ...] | list[IssueTicket],
    tags: tuple[VersionTag, ...] | list[VersionTag],
) -> DefectRecord:
    """Anchor one (fix commit, issue) pair to its OV/FV, and IV when listed.

    The opening version comes from the ticket's open time, the fixing version
    from the fix commit's timestamp.  An explicit IV is the smallest ordinal
    among the ticket's affected versions; entries after the fixing version are
    ignored as tracker noise.
    """
    commit_id, issue_key = pair
    commit = next(c for c in commits if c.id == commit_id)
    issue = next(i for i in issues if i.key == issue_key)
    diagnostics: list[str] = []

    ov = version_of(issue.open_time, tags)
    fv = version_of(commit.timestamp, tags)
    if ov > fv:
        diagnostics.append(
            f"defect {issue_key}: ticket opened after the fixing commit; ov clamped {ov} -> {fv}"
        )
        ov = fv

    iv: int | None = None
    provenance: str | None = None
    if issue.affected_versions:
        by_name = {t.name: t.ordinal for t in tags}
        ordinals = [by_name[name] for name in issue.affected_versions]
        valid = [o for o in ordinals if o <= fv]
        dropped = sorted(set(ordinals) - set(valid))
        if dropped:
            diagnostics.append(
                f"defect {issue_key}: affected versions {dropped} are after fv={fv}, ignored"
            )
        if valid:
            iv = min(valid)
            provenance = EXPLICIT
            if iv > ov:
                diagnostics.append(
                    f"defect {issue_key}: explicit iv={iv} after ov={ov}; clamped to ov"
                )
                iv = ov
    return DefectRecord(
        id=issue_key,
        fix_commit=commit_id,
        ov=ov,
        fv=fv,
        iv=iv,
        iv_provenance=provenance,
        diagnostics=tuple(diagnostics),
    )


def compute_stable_proportion(defects: list[DefectRecord]) -> StableProportion:
    """Mean of (fv - iv) / max(fv - ov, 1) over defects with an explicit IV.

    The denominator is clamped to one version so defects discovered and fixed
    within the same version still contribute.  With no explicit-IV defects the
    proportion cold-starts at 1.
    """
    ratios = [
        (d.fv - d.iv) / max(d.fv - d.ov, 1)
        for d in defects
        if d.iv is not None and d.iv_provenance == EXPLICIT
    ]
    if not ratios:
        return StableProportion(p=1.0, sample_count=0)
    # fsum keeps the mean exactly permutation-invariant
    return StableProportion(p=math.fsum(ratios) / len(ratios), sample_count=len(ratios))


def estimate_iv(defect: DefectRecord, sp: StableProportion) -> DefectRecord:
    """Fill a missing IV as fv - round(p * max(fv - ov, 1)), clamped into [1, ov]."""
    if defect.iv is not None:
        raise ValueError(f"defect {defect.id} already has an IV")
    iv = max(1, defect.fv - _round_half_away(sp.p * max(defect.fv - defect.ov, 1)))
    iv = min(iv, defect.ov)
    return replace(defect, iv=iv, iv_provenance=ESTIMATED)


def label_affected_commits(
    defect: DefectRecord,
    commits: tuple[CommitRecord, ...] | list[CommitRecord],
    tags: tuple[VersionTag, ...] | list[VersionTag],
) -> set[str]:
    """Commit ids the defect was present in.

    The defect is active strictly after the release preceding its injection
    version (project start when iv = 1) and strictly before the fixing
    commit; the fixing commit itself no longer contains it.
    """
    if not defect.anchored:
        raise ValueError(f"defect {defect.id} is not anchored")
    fix_ts = next(c.timestamp for c in commits if c.id == defect.fix_commit)
    if defect.iv <= 1:
        lower = None
    else:
        by_ordinal = {t.ordinal: t for t in tags}
        lower = by_ordinal[defect.iv - 1].release_time
    return {
        c.id
        for c in commits
        if (lower is None or c.timestamp > lower) and c.timestamp < fix_ts
    }


def build_density_series(
    commits: tuple[CommitRecord, ...] | list[CommitRecord],
    defects: list[DefectRecord],
    tags: tuple[VersionTag, ...] | list[VersionTag],
) -> DefectDensitySeries:
    """Count, for every commit, how many defects are active at it.

    Equivalent to summing each defect's affected-commit indicator series, but
    computed with an interval sweep over the time-ordered commit list.
    """
    ordered = sorted(commits, key=lambda c: (c.timestamp, c.id))
    times = [c.timestamp for c in ordered]
    counts = [0] * len(ordered)
    by_ordinal = {t.ordinal: t for t in tags}
    fix_ts = {c.id: c.timestamp for c in ordered}
    for defect in defects:
        if not defect.anchored:
            raise ValueError(f"defect {defect.id} is not anchored")
        end_ts = fix_ts[defect.fix_commit]
        if defect.iv <= 1:
            start = 0
        else:
            lower = by_ordinal[defect.iv - 1].release_time
            start = bisect_right(times, lower)
        end = bisect_left(times, end_ts)
        for idx in range(start, end):
            counts[idx] += 1
    return DefectDensitySeries(
        commit_ids=tuple(c.id for c in ordered),
        timestamps=tuple(times),
        counts=tuple(counts),
    )


@dataclass
class LabelingResult:
    """Everything the lifecycle stage produces for one project."""

    defects: list[DefectRecord]
    proportion: StableProportion
    density: DefectDensitySeries
    unmatched_fixes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def label_project(project) -> LabelingResult:
    """Run the full lifecycle stage: match, anchor, estimate, count."""
    from .ingest import identify_fix_commits

    match = identify_fix_commits(project.commits, project.issues)
    partial = [
        anchor_defect(pair, project.commits, project.issues, project.tags)
        for pair in match.pairs
    ]
    sp = compute_stable_proportion(partial)
    defects = [d if d.anchored else estimate_iv(d, sp) for d in partial]
    density = build_density_series(project.commits, defects, project.tags)
    warnings = list(match.warnings)
    for d in defects:
        warnings.extend(d.diagnostics)
    return LabelingResult(
        defects=defects,
        proportion=sp,
        density=density,
        unmatched_fixes=match.unmatched_fixes,
        warnings=warnings,
    )


def write_defects_csv(defects: list[DefectRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "iv", "iv_provenance", "ov", "fv", "fix_commit"])
        for d in defects:
            writer.writerow([d.id, d.iv, d.iv_provenance, d.ov, d.fv, d.fix_commit])


def write_density_csv(density: DefectDensitySeries, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["commit_id", "timestamp", "active_defects"])
        for cid, ts, count in zip(density.commit_ids, density.timestamps, density.counts):
            writer.writerow([cid, ts, count])
