"""Seeded synthetic project generator.

Produces on-disk projects in the ingest format together with the exact ground
truth used to build them, so the labeling pipeline has an oracle: commit
arrivals are Poisson, versions are tagged every 30 days, each defect's
lifecycle is constructed from a known proportion between discovery span and
injection span, and designated "planted" features are raised in step with the
active-defect count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import CommitRecord, IssueTicket, Project, RepoMeta, VersionTag, save_project, version_of

START_EPOCH = 1577836800  # 2020-01-01T00:00:00Z; fixed so reruns are byte-identical
DAY = 86400


@dataclass(frozen=True)
class SynthParams:
    days: int = 120
    commits_per_day: float = 1.0
    n_features: int = 6
    defect_rate: float = 0.08  # per-commit probability of anchoring a defect fix
    signal_strength: float = 2.0
    planted_features: tuple[int, ...] = (0,)
    proportion: float = 1.5  # generator lifecycle proportion (fv-iv)/(fv-ov)
    max_defects: int | None = None

    def __post_init__(self):
        if self.days < 1 or self.commits_per_day <= 0 or self.n_features < 1:
            raise ValueError("days, commit rate, and n_features must be positive")
        if not 0.0 <= self.defect_rate <= 1.0:
            raise ValueError("defect_rate must be a probability")
        if any(i >= self.n_features for i in self.planted_features):
            raise ValueError("planted feature index out of range")


@dataclass(frozen=True)
class TruthDefect:
    id: str
    fix_commit: str
    iv: int
    ov: int
    fv: int
    followed_proportion: bool  # False when clamping bent the lifecycle


@dataclass
class GroundTruth:
    proportion: float
    defects: list[TruthDefect]
    planted: tuple[str, ...]
    density: list[int] = field(default_factory=list)  # per commit, in commit order
    commit_ids: list[str] = field(default_factory=list)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def synth_project(seed: int, params: SynthParams, out_dir: str | Path) -> GroundTruth:
    """Generate one project under ``out_dir`` and return its ground truth."""
    rng = np.random.default_rng(seed)

    times: list[int] = []
    for day in range(params.days):
        for offset in sorted(rng.integers(0, DAY, size=rng.poisson(params.commits_per_day))):
            times.append(START_EPOCH + day * DAY + int(offset))
    if len(times) < 2:  # degenerate draw; pin two commits so the format stays valid
        times = [START_EPOCH + DAY // 2, START_EPOCH + (params.days - 1) * DAY + DAY // 2]
    times.sort()
    commit_ids = [f"c{i:04d}" for i in range(len(times))]

    n_versions = max(1, math.ceil(params.days / 30))
    tags = tuple(
        VersionTag(name=f"v{j}", release_time=START_EPOCH + 30 * DAY * j, ordinal=j)
        for j in range(1, n_versions + 1)
    )
    release = {t.ordinal: t.release_time for t in tags}

    defects: list[TruthDefect] = []
    issues: list[IssueTicket] = []
    is_fix = [False] * len(times)
    for idx in range(len(times)):
        if rng.random() >= params.defect_rate:
            continue
        if params.max_defects is not None and len(defects) >= params.max_defects:
            break
        fix_ts = times[idx]
        fv = version_of(fix_ts, tags)
        if fv > n_versions:  # should not happen: tags cover the whole span
            continue
        ov = int(rng.integers(max(1, fv - 3), fv + 1))
        iv_raw = fv - _round_half_away(params.proportion * max(fv - ov, 1))
        iv = min(max(iv_raw, 1), ov)
        followed = iv_raw == iv
        lo = release[ov - 1] + 1 if ov >= 2 else START_EPOCH
        hi = min(release[ov], fix_ts)
        open_time = int(rng.integers(lo, hi + 1))
        key = f"BUG-{len(defects) + 1}"
        is_fix[idx] = True
        issues.append(
            IssueTicket(
                key=key,
                open_time=open_time,
                affected_versions=tuple(f"v{o}" for o in range(iv, fv + 1)),
                fix_commit_ids=(commit_ids[idx],),
            )
        )
        defects.append(
            TruthDefect(
                id=key,
                fix_commit=commit_ids[idx],
                iv=iv,
                ov=ov,
                fv=fv,
                followed_proportion=followed,
            )
        )

    ts_of = dict(zip(commit_ids, times))
    density = []
    for ts in times:
        active = 0
        for d in defects:
            lower_ok = d.iv <= 1 or ts > release[d.iv - 1]
            if lower_ok and ts < ts_of[d.fix_commit]:
                active += 1
        density.append(active)

    feature_names = [f"m{j + 1}" for j in range(params.n_features)]
    base = rng.normal(5.0, 1.0, size=(len(times), params.n_features))
    for j in params.planted_features:
        base[:, j] += params.signal_strength * np.asarray(density) + rng.normal(
            0.0, 0.1, size=len(times)
        )

    commits = tuple(
        CommitRecord(
            id=commit_ids[i],
            timestamp=times[i],
            is_fix=is_fix[i],
            issue_keys=(),
            metrics={name: float(base[i, j]) for j, name in enumerate(feature_names)},
        )
        for i in range(len(times))
    )
    meta = RepoMeta(
        archived=False, fork=False, last_activity=times[-1], contributors=5, stars=120
    )
    out_dir = Path(out_dir)
    project = Project(
        name=out_dir.name, commits=commits, tags=tags, issues=tuple(issues), meta=meta
    )
    save_project(out_dir, project)

    truth = GroundTruth(
        proportion=params.proportion,
        defects=defects,
        planted=tuple(feature_names[j] for j in params.planted_features),
        density=density,
        commit_ids=list(commit_ids),
    )
    with (out_dir / "ground_truth.json").open("w", encoding="utf-8") as fh:
        json.dump(
            {
                "proportion": truth.proportion,
                "planted": list(truth.planted),
                "defects": [
                    {
                        "id": d.id,
                        "fix_commit": d.fix_commit,
                        "iv": d.iv,
                        "ov": d.ov,
                        "fv": d.fv,
                        "followed_proportion": d.followed_proportion,
                    }
                    for d in truth.defects
                ],
                "density": truth.density,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return truth
