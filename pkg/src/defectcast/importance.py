"""Feature-importance battery: rank correlation, information gain ratio,
random-forest permutation importance, and gradient-boosting gain importance,
plus the mean-rank consensus that feeds the ablation stage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import StatsError
from .trees import gradient_boost_importance, random_forest_importance

METHODS = ("correlation", "igr", "rf", "gbm")


@dataclass
class ImportanceRanking:
    method: str
    scores: dict[str, float]
    ranks: dict[str, int]  # 1 = most important
    notes: list[str]

    def ordered(self) -> list[str]:
        return sorted(self.ranks, key=self.ranks.get)


def _rank_features(scores: dict[str, float], feature_order) -> dict[str, int]:
    # descending score; canonical feature order breaks ties deterministically
    position = {name: i for i, name in enumerate(feature_order)}
    ordered = sorted(scores, key=lambda name: (-scores[name], position[name]))
    return {name: i + 1 for i, name in enumerate(ordered)}


def spearman_importance(panel) -> ImportanceRanking:
    """Absolute Spearman rank correlation of each feature with the target."""
    y = np.asarray(panel.target, dtype=float)
    scores: dict[str, float] = {}
    notes: list[str] = []
    y_ranks = stats.rankdata(y)
    for j, name in enumerate(panel.feature_names):
        x = panel.features[:, j]
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            scores[name] = 0.0
            if np.ptp(x) == 0:
                notes.append(f"{name}: constant feature, correlation undefined, scored 0")
            continue
        x_ranks = stats.rankdata(x)
        rho = np.corrcoef(x_ranks, y_ranks)[0, 1]
        scores[name] = float(abs(rho))
    return ImportanceRanking(
        method="correlation",
        scores=scores,
        ranks=_rank_features(scores, panel.feature_names),
        notes=notes,
    )


def _equal_frequency_bins(values: np.ndarray, b: int) -> np.ndarray:
    edges = np.quantile(values, [i / b for i in range(1, b)])
    return np.searchsorted(edges, values, side="left")


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    freq = counts / counts.sum()
    return float(-(freq * np.log(freq)).sum())


def igr_importance(panel) -> ImportanceRanking:
    """Information gain ratio after equal-frequency discretization.

    Target and features share the same binning rule, b = min(10, ceil(sqrt(n)))
    bins, so a feature identical to the target scores exactly 1.
    """
    y = np.asarray(panel.target, dtype=float)
    n = len(y)
    if n < 20:
        raise StatsError(f"igr_importance needs n >= 20, got {n}")
    b = min(10, math.ceil(math.sqrt(n)))
    t_bins = _equal_frequency_bins(y, b)
    h_t = _entropy(t_bins)
    scores: dict[str, float] = {}
    notes: list[str] = []
    for j, name in enumerate(panel.feature_names):
        f_bins = _equal_frequency_bins(panel.features[:, j], b)
        h_f = _entropy(f_bins)
        if h_f <= 0:
            scores[name] = 0.0
            notes.append(f"{name}: single bin after discretization, scored 0")
            continue
        h_t_given_f = 0.0
        for value in np.unique(f_bins):
            mask = f_bins == value
            h_t_given_f += mask.mean() * _entropy(t_bins[mask])
        scores[name] = float(max(0.0, (h_t - h_t_given_f)) / h_f)
    return ImportanceRanking(
        method="igr",
        scores=scores,
        ranks=_rank_features(scores, panel.feature_names),
        notes=notes,
    )


def rf_importance(panel, seed: int = 0) -> ImportanceRanking:
    """Out-of-bag permutation importance from a 100-tree bootstrap forest."""
    y = np.asarray(panel.target, dtype=float)
    if len(y) < 30:
        raise StatsError(f"rf_importance needs n >= 30, got {len(y)}")
    result = random_forest_importance(np.asarray(panel.features, dtype=float), y, seed=seed)
    scores = {name: float(result.importances[j]) for j, name in enumerate(panel.feature_names)}
    return ImportanceRanking(
        method="rf",
        scores=scores,
        ranks=_rank_features(scores, panel.feature_names),
        notes=[],
    )


def gbm_importance(panel, seed: int = 0, *, n_rounds: int = 200) -> ImportanceRanking:
    """Total split gain across a 200-round depth-3 boosted ensemble."""
    y = np.asarray(panel.target, dtype=float)
    if len(y) < 30:
        raise StatsError(f"gbm_importance needs n >= 30, got {len(y)}")
    result = gradient_boost_importance(
        np.asarray(panel.features, dtype=float), y, seed=seed, n_rounds=n_rounds
    )
    scores = {name: float(result.gains[j]) for j, name in enumerate(panel.feature_names)}
    return ImportanceRanking(
        method="gbm",
        scores=scores,
        ranks=_rank_features(scores, panel.feature_names),
        notes=[],
    )


def all_importances(panel, seed: int = 0) -> list[ImportanceRanking]:
    return [
        spearman_importance(panel),
        igr_importance(panel),
        rf_importance(panel, seed=seed),
        gbm_importance(panel, seed=seed),
    ]


def consensus_ranking(rankings: list[ImportanceRanking], feature_order=None) -> list[str]:
    """Borda consensus: order features by mean rank across methods.

    Ties fall back to the canonical feature order (the order of the first
    ranking when none is given).
    """
    if not rankings:
        raise ValueError("consensus_ranking needs at least one ranking")
    feature_sets = [set(r.ranks) for r in rankings]
    if any(fs != feature_sets[0] for fs in feature_sets[1:]):
        raise ValueError("rankings cover different feature sets")
    if feature_order is None:
        feature_order = list(rankings[0].ranks)
    position = {name: i for i, name in enumerate(feature_order)}
    mean_rank = {
        name: sum(r.ranks[name] for r in rankings) / len(rankings) for name in feature_sets[0]
    }
    return sorted(mean_rank, key=lambda name: (mean_rank[name], position[name]))


def write_importance_csv(rows, path: str | Path) -> None:
    """rows: iterable of (project, window, ranking)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["project", "window", "method", "feature", "score", "rank"])
        for project, window, ranking in rows:
            for name in ranking.ordered():
                writer.writerow(
                    [project, window, ranking.method, name, repr(ranking.scores[name]), ranking.ranks[name]]
                )


def write_consensus_csv(rows, path: str | Path) -> None:
    """rows: iterable of (project, window, ordered feature list)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["project", "window", "feature", "consensus_rank"])
        for project, window, ordered in rows:
            for i, name in enumerate(ordered, start=1):
                writer.writerow([project, window, name, i])
