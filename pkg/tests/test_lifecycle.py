from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DAY, START, write_project
from defectcast.ingest import load_project, version_of
from defectcast.lifecycle import (
    ESTIMATED,
    EXPLICIT,
    DefectRecord,
    StableProportion,
    anchor_defect,
    build_density_series,
    compute_stable_proportion,
    estimate_iv,
    label_affected_commits,
    label_project,
)


def _project_with(tmp_path, issues, commits=None):
    commits = commits or [
        ("c1", START + 5 * DAY, False, [], 1.0, 1.0),
        ("c2", START + 35 * DAY, False, [], 1.0, 1.0),
        ("c3", START + 65 * DAY, False, [], 1.0, 1.0),
        ("c4", START + 95 * DAY, True, [], 1.0, 1.0),
    ]
    root = write_project(
        tmp_path / "p",
        commits=commits,
        versions=[
            ("v1", START + 30 * DAY),
            ("v2", START + 60 * DAY),
            ("v3", START + 90 * DAY),
            ("v4", START + 120 * DAY),
        ],
        issues=issues,
    )
    return load_project(root)


# ------------------------------------------------------------------ anchoring


def test_anchor_with_full_av_list(tmp_path):
    project = _project_with(
        tmp_path, issues=[("BUG-1", START + 40 * DAY, ["v1", "v2", "v3", "v4"], ["c4"])]
    )
    record = anchor_defect(("c4", "BUG-1"), project.commits, project.issues, project.tags)
    assert (record.iv, record.ov, record.fv) == (1, 2, 4)
    assert record.iv_provenance == EXPLICIT


def test_anchor_without_av_list_leaves_iv_missing(tmp_path):
    project = _project_with(tmp_path, issues=[("BUG-1", START + 65 * DAY, [], ["c4"])])
    record = anchor_defect(("c4", "BUG-1"), project.commits, project.issues, project.tags)
    assert record.iv is None and not record.anchored
    assert (record.ov, record.fv) == (3, 4)


def test_anchor_ignores_av_entries_after_fv(tmp_path):
    # fix lands in v3 (commit at day 65 -> v3); the v4 AV entry is tracker noise
    commits = [
        ("c1", START + 5 * DAY, False, [], 1.0, 1.0),
        ("c2", START + 35 * DAY, False, [], 1.0, 1.0),
        ("c3", START + 65 * DAY, True, [], 1.0, 1.0),
    ]
    project = _project_with(
        tmp_path,
        issues=[("BUG-1", START + 40 * DAY, ["v2", "v4"], ["c3"])],
        commits=commits,
    )
    record = anchor_defect(("c3", "BUG-1"), project.commits, project.issues, project.tags)
    # Oracle: brute-force validity scan of the AV list against fv
    name_to_ordinal = {t.name: t.ordinal for t in project.tags}
    fv = version_of(START + 65 * DAY, project.tags)
    valid = [name_to_ordinal[v] for v in ("v2", "v4") if name_to_ordinal[v] <= fv]
    assert record.fv == fv == 3
    assert record.iv == min(valid) == 2
    assert any("after fv" in d for d in record.diagnostics)


def test_anchor_clamps_ov_when_ticket_opened_after_fix(tmp_path):
    # ticket opened past the last release (synthetic v5) but fixed in v4
    project = _project_with(tmp_path, issues=[("BUG-1", START + 125 * DAY, [], ["c4"])])
    record = anchor_defect(("c4", "BUG-1"), project.commits, project.issues, project.tags)
    assert record.ov == record.fv == 4
    assert any("clamped" in d for d in record.diagnostics)


# ---------------------------------------------------------- stable proportion


def _partial(id, ov, fv, iv=None, provenance=None):
    return DefectRecord(id=id, fix_commit="cX", ov=ov, fv=fv, iv=iv, iv_provenance=provenance)


def test_stable_proportion_hand_arithmetic():
    defects = [_partial("d1", ov=2, fv=4, iv=1, provenance=EXPLICIT)]
    sp = compute_stable_proportion(defects)
    assert sp.p == pytest.approx((4 - 1) / (4 - 2)) == 1.5
    assert sp.sample_count == 1


def test_stable_proportion_clamps_zero_discovery_span():
    defects = [_partial("d1", ov=3, fv=3, iv=1, provenance=EXPLICIT)]
    sp = compute_stable_proportion(defects)
    assert sp.p == 2.0  # (3 - 1) / max(0, 1)


def test_stable_proportion_cold_start():
    sp = compute_stable_proportion([_partial("d1", ov=2, fv=3)])
    assert sp == StableProportion(p=1.0, sample_count=0)


@given(st.permutations(list(range(6))))
def test_stable_proportion_is_permutation_invariant(order):
    defects = [
        _partial(f"d{i}", ov=2 + (i % 3), fv=4 + (i % 2), iv=1, provenance=EXPLICIT)
        for i in range(6)
    ]
    shuffled = [defects[i] for i in order]
    assert compute_stable_proportion(shuffled) == compute_stable_proportion(defects)


# --------------------------------------------------------------- iv estimation


def test_estimate_iv_formula_example():
    record = estimate_iv(_partial("d", ov=3, fv=5), StableProportion(p=1.5, sample_count=4))
    assert record.iv == 2  # 5 - round(1.5 * 2)
    assert record.iv_provenance == ESTIMATED


def test_estimate_iv_clamp_chain_when_ov_equals_fv():
    record = estimate_iv(_partial("d", ov=3, fv=3), StableProportion(p=1.0, sample_count=1))
    assert record.iv == 2


def test_estimate_iv_lower_clamp():
    record = estimate_iv(_partial("d", ov=1, fv=10), StableProportion(p=20.0, sample_count=1))
    assert record.iv == 1


def _round_half_away(x):
    return int(math.floor(x + 0.5))


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5, 2.37])
def test_estimate_iv_matches_formula_over_ordinal_grid(p):
    # Oracle: exhaustive independent evaluation of the published formula
    sp = StableProportion(p=p, sample_count=3)
    for ov in range(1, 7):
        for fv in range(ov, 7):
            record = estimate_iv(_partial("d", ov=ov, fv=fv), sp)
            expected = min(max(1, fv - _round_half_away(p * max(fv - ov, 1))), ov)
            assert record.iv == expected
            assert 1 <= record.iv <= record.ov <= record.fv


# --------------------------------------------------------------- labeling


def _label_fixture(tmp_path, n_commits=20):
    commits = [
        (f"c{i:02d}", START + i * 5 * DAY, False, [], 1.0, 1.0) for i in range(n_commits)
    ]
    # make the last commit the fixer of BUG-1
    commits[-1] = (commits[-1][0], commits[-1][1], True, [], 1.0, 1.0)
    root = write_project(
        tmp_path / "p",
        commits=commits,
        versions=[(f"v{j}", START + 30 * DAY * j) for j in range(1, 5)],
        issues=[("BUG-1", START + 40 * DAY, [], [commits[-1][0]])],
    )
    return load_project(root)


def brute_force_affected(defect, commits, tags) -> set[str]:
    by_ordinal = {t.ordinal: t.release_time for t in tags}
    fix_ts = next(c.timestamp for c in commits if c.id == defect.fix_commit)
    out = set()
    for c in commits:
        after_start = defect.iv <= 1 or c.timestamp > by_ordinal[defect.iv - 1]
        if after_start and c.timestamp < fix_ts:
            out.add(c.id)
    return out


def test_label_affected_commits_matches_brute_force_interval(tmp_path):
    project = _label_fixture(tmp_path)
    defect = DefectRecord(
        id="BUG-1", fix_commit="c19", ov=2, fv=4, iv=2, iv_provenance=EXPLICIT
    )
    labeled = label_affected_commits(defect, project.commits, project.tags)
    assert labeled == brute_force_affected(defect, project.commits, project.tags)
    assert "c19" not in labeled  # the fixing commit is excluded


def test_label_affected_commits_iv1_reaches_project_start(tmp_path):
    project = _label_fixture(tmp_path)
    defect = DefectRecord(id="BUG-1", fix_commit="c19", ov=1, fv=4, iv=1, iv_provenance=EXPLICIT)
    labeled = label_affected_commits(defect, project.commits, project.tags)
    assert "c00" in labeled


def test_label_affected_commits_empty_span(tmp_path):
    project = _label_fixture(tmp_path, n_commits=4)
    # fix commit is c03 at day 15; an iv=1 defect fixed by the very first commit
    defect = DefectRecord(id="BUG-1", fix_commit="c00", ov=1, fv=1, iv=1, iv_provenance=EXPLICIT)
    labeled = label_affected_commits(defect, project.commits, project.tags)
    assert labeled == set()


# ----------------------------------------------------------- density series


def test_density_equals_brute_force_membership_counts(tmp_path):
    project = _label_fixture(tmp_path)
    defects = [
        DefectRecord(id="d1", fix_commit="c10", ov=1, fv=2, iv=1, iv_provenance=EXPLICIT),
        DefectRecord(id="d2", fix_commit="c15", ov=2, fv=3, iv=2, iv_provenance=ESTIMATED),
        DefectRecord(id="d3", fix_commit="c19", ov=3, fv=4, iv=1, iv_provenance=EXPLICIT),
    ]
    density = build_density_series(project.commits, defects, project.tags)
    # Oracle: O(defects x commits) membership count
    sets = [brute_force_affected(d, project.commits, project.tags) for d in defects]
    for cid, count in zip(density.commit_ids, density.counts):
        assert count == sum(cid in s for s in sets)


def test_density_counts_overlapping_defects_additively(tmp_path):
    project = _label_fixture(tmp_path)
    defects = [
        DefectRecord(id="d1", fix_commit="c10", ov=1, fv=2, iv=1, iv_provenance=EXPLICIT),
        DefectRecord(id="d2", fix_commit="c10", ov=1, fv=2, iv=1, iv_provenance=EXPLICIT),
    ]
    density = build_density_series(project.commits, defects, project.tags)
    assert density.counts[0] == 2


def test_density_no_defects_all_zero(tmp_path):
    project = _label_fixture(tmp_path)
    density = build_density_series(project.commits, [], project.tags)
    assert set(density.counts) == {0}
    assert len(density) == len(project.commits)


def test_density_removing_a_defect_never_increases_counts(tmp_path):
    project = _label_fixture(tmp_path)
    defects = [
        DefectRecord(id="d1", fix_commit="c10", ov=1, fv=2, iv=1, iv_provenance=EXPLICIT),
        DefectRecord(id="d2", fix_commit="c15", ov=2, fv=3, iv=2, iv_provenance=ESTIMATED),
    ]
    full = build_density_series(project.commits, defects, project.tags)
    reduced = build_density_series(project.commits, defects[:1], project.tags)
    assert all(r <= f for r, f in zip(reduced.counts, full.counts))


def test_label_project_end_to_end_orders_iv_ov_fv(small_project):
    labeling = label_project(small_project)
    assert labeling.defects, "fixture should produce defects"
    for d in labeling.defects:
        assert 1 <= d.iv <= d.ov <= d.fv
    assert labeling.unmatched_fixes == ["c5"]
