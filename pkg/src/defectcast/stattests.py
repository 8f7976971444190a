"""Hypothesis-testing battery at alpha = 0.01.

Normality is screened with the Anderson-Darling test; depending on the
outcome, group comparisons run down the non-parametric branch (Wilcoxon
signed-rank for paired data, Kruskal-Wallis plus Dunn's pairwise test
otherwise) or the parametric branch (paired t, one-way ANOVA plus Tukey's
HSD).  Dunn p-values get a Holm step-down adjustment; Tukey's q statistic
already controls the family-wise rate through the studentized-range
distribution, which is evaluated here by direct numerical quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .errors import StatsError

DEFAULT_ALPHA = 0.01
_QUAD_TOL = 1e-6


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float
    alpha: float
    reject_null: bool
    n: tuple[int, ...]
    note: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.reject_null != (self.p_value < self.alpha):
            raise ValueError("reject_null must equal p_value < alpha")


def _result(name, statistic, p, alpha, n, note=None) -> TestResult:
    p = float(min(max(p, 0.0), 1.0))
    return TestResult(
        name=name,
        statistic=float(statistic),
        p_value=p,
        alpha=alpha,
        reject_null=bool(p < alpha),
        n=tuple(int(v) for v in n),
        note=note,
    )


@dataclass
class PairwiseMatrix:
    labels: list[str]
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    method: str

    def pair(self, a: str, b: str) -> float:
        return float(self.adjusted_p[self.labels.index(a), self.labels.index(b)])


# ---------------------------------------------------------------- normality


def anderson_darling(sample, *, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Anderson-Darling normality test with estimated mean and variance.

    Uses the small-sample corrected statistic A*^2 = A^2 (1 + 0.75/n +
    2.25/n^2) and the standard piecewise-exponential p-value approximation
    for the composite-normal case.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 8:
        raise StatsError(f"anderson_darling needs n >= 8, got {n}")
    sd = x.std(ddof=1)
    if sd <= 0:
        raise StatsError("anderson_darling: degenerate sample (zero variance)")
    z = (x - x.mean()) / sd
    u = np.clip(special.ndtr(z), 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1])))
    a2_star = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    if a2_star > 32.0:
        p = 0.0  # far beyond the approximation's domain; exp would overflow
    elif a2_star >= 0.6:
        p = math.exp(1.2937 - 5.709 * a2_star + 0.0186 * a2_star**2)
    elif a2_star >= 0.34:
        p = math.exp(0.9177 - 4.279 * a2_star - 1.38 * a2_star**2)
    elif a2_star > 0.2:
        p = 1.0 - math.exp(-8.318 + 42.796 * a2_star - 59.938 * a2_star**2)
    else:
        p = 1.0 - math.exp(-13.436 + 101.14 * a2_star - 223.73 * a2_star**2)
    return _result("anderson_darling", a2_star, p, alpha, (n,))


# ------------------------------------------------------------ rank-based


def _tie_counts(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts[counts > 1]


def wilcoxon_signed_rank(x, y, *, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped.  With m <= 25 remaining pairs the p-value
    is exact (full enumeration of the 2^m sign assignments, computed by
    convolution); beyond that the normal approximation with tie and
    continuity corrections is used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise StatsError("wilcoxon_signed_rank needs equal-length samples")
    d = x - y
    d = d[d != 0.0]
    m = len(d)
    if m == 0:
        raise StatsError("wilcoxon_signed_rank: all differences are zero (no information)")
    if m < 6:
        raise StatsError(f"wilcoxon_signed_rank needs >= 6 nonzero differences, got {m}")
    ranks = stats.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if m <= 25:
        # distribution of 2*W+ over all sign assignments, by polynomial product
        doubled = np.rint(2 * ranks).astype(int)
        total = int(doubled.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in doubled:
            counts[r:] += counts[: counts.size - r].copy()
        cdf = counts[: int(round(2 * w)) + 1].sum() / 2.0**m
        p = min(1.0, 2.0 * cdf)
    else:
        mean = m * (m + 1) / 4.0
        ties = _tie_counts(np.abs(d))
        var = m * (m + 1) * (2 * m + 1) / 24.0 - float(((ties**3 - ties).sum())) / 48.0
        if var <= 0:
            raise StatsError("wilcoxon_signed_rank: zero variance after tie correction")
        z = (w - mean + 0.5) / math.sqrt(var)  # w <= mean, correct toward the mean
        p = min(1.0, 2.0 * special.ndtr(z))
    return _result("wilcoxon_signed_rank", w, p, alpha, (m,))


def _pooled_ranks(groups: list[np.ndarray]) -> tuple[list[np.ndarray], int]:
    pooled = np.concatenate(groups)
    ranks = stats.rankdata(pooled)
    out = []
    offset = 0
    for g in groups:
        out.append(ranks[offset : offset + len(g)])
        offset += len(g)
    return out, len(pooled)


def kruskal_wallis(groups, *, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Kruskal-Wallis omnibus H test with tie correction."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 3 for g in groups):
        raise StatsError("kruskal_wallis needs >= 2 groups with n >= 3 each")
    rank_groups, n_total = _pooled_ranks(groups)
    h = 12.0 / (n_total * (n_total + 1)) * sum(
        rg.sum() ** 2 / len(rg) for rg in rank_groups
    ) - 3.0 * (n_total + 1)
    ties = _tie_counts(np.concatenate(groups))
    correction = 1.0 - float((ties**3 - ties).sum()) / (n_total**3 - n_total)
    if correction <= 0:  # every pooled value identical
        return _result("kruskal_wallis", 0.0, 1.0, alpha, [len(g) for g in groups])
    h /= correction
    h = max(h, 0.0)
    p = float(stats.chi2.sf(h, df=len(groups) - 1))
    return _result("kruskal_wallis", h, p, alpha, [len(g) for g in groups])


def dunn_posthoc(groups, labels=None, *, alpha: float = DEFAULT_ALPHA) -> PairwiseMatrix:
    """Dunn's z test on all group pairs, Holm-adjusted."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    k = len(groups)
    labels = list(labels) if labels is not None else [f"group{i}" for i in range(k)]
    rank_groups, n_total = _pooled_ranks(groups)
    means = [rg.mean() for rg in rank_groups]
    ties = _tie_counts(np.concatenate(groups))
    tie_term = float((ties**3 - ties).sum()) / (12.0 * (n_total - 1))
    base = n_total * (n_total + 1) / 12.0 - tie_term

    raw = np.full((k, k), np.nan)
    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            var = base * (1.0 / len(groups[i]) + 1.0 / len(groups[j]))
            z = (means[i] - means[j]) / math.sqrt(var) if var > 0 else 0.0
            p = min(1.0, 2.0 * float(special.ndtr(-abs(z))))
            raw[i, j] = raw[j, i] = p
            pairs.append((i, j, p))
    adjusted = np.full((k, k), np.nan)
    adj_values = holm_adjust([p for _, _, p in pairs])
    for (i, j, _), ap in zip(pairs, adj_values):
        adjusted[i, j] = adjusted[j, i] = ap
    return PairwiseMatrix(labels=labels, raw_p=raw, adjusted_p=adjusted, method="dunn-holm")


# ------------------------------------------------------------ parametric


def _anova_sums(groups: list[np.ndarray]):
    k = len(groups)
    n_total = sum(len(g) for g in groups)
    grand = np.concatenate(groups).mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    return ss_between, ss_within, k - 1, n_total - k


def anova_oneway(groups, *, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """One-way ANOVA F test."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise StatsError("anova_oneway needs >= 2 groups with n >= 2 each")
    ssb, ssw, df1, df2 = _anova_sums(groups)
    ms_between = ssb / df1
    ms_within = ssw / df2
    sizes = [len(g) for g in groups]
    if ms_within <= 0:
        if ms_between <= 0:
            return _result("anova_oneway", 0.0, 1.0, alpha, sizes)
        return _result(
            "anova_oneway", math.inf, 0.0, alpha, sizes,
            note="zero within-group variance with unequal means",
        )
    f = ms_between / ms_within
    p = float(stats.f.sf(f, df1, df2))
    return _result("anova_oneway", f, p, alpha, sizes)


def paired_t(x, y, *, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Two-sided paired t test."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or len(x) < 2:
        raise StatsError("paired_t needs equal-length samples with n >= 2")
    d = x - y
    sd = d.std(ddof=1)
    if sd <= 0:
        raise StatsError("paired_t: zero difference variance")
    t = float(d.mean() / (sd / math.sqrt(len(d))))
    p = 2.0 * float(stats.t.sf(abs(t), df=len(d) - 1))
    return _result("paired_t", t, p, alpha, (len(d),))


# ------------------------------------------- studentized range by quadrature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _composite_gl(fn, lo: float, hi: float, panels: int) -> float:
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    xs = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return float((fn(xs.ravel()).reshape(xs.shape) * _GL_WEIGHTS[None, :] * half[:, None]).sum())


def _normal_range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w), vectorized over w."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    out = np.zeros_like(w)
    positive = w > 0
    if positive.any():
        z_lo, z_hi, panels = -9.0, 9.0, 24
        edges = np.linspace(z_lo, z_hi, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        z = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        weights = (np.broadcast_to(_GL_WEIGHTS[None, :], (panels, 16)) * half[:, None]).ravel()
        phi = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
        cdf_z = special.ndtr(z)
        wv = w[positive][:, None]
        inner = (cdf_z[None, :] - special.ndtr(z[None, :] - wv)) ** (k - 1)
        out[positive] = k * (inner * (phi * weights)[None, :]).sum(axis=1)
    return np.clip(out, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: int) -> float:
    """P(Q <= q) for the studentized range with k groups and df error dof.

    Outer integral over the chi (scale) density, inner over the normal range
    probability; refined by panel doubling to absolute tolerance 1e-6.
    """
    if q <= 0:
        return 0.0
    if k < 2 or df < 1:
        raise StatsError(f"studentized_range_cdf: bad parameters k={k}, df={df}")
    log_coef = (1.0 - df / 2.0) * math.log(2.0) + (df / 2.0) * math.log(df) - special.gammaln(df / 2.0)
    u_max = math.sqrt(stats.chi2.isf(1e-14, df) / df)

    def integrand(u):
        u = np.maximum(u, 1e-300)
        density = np.exp(log_coef + (df - 1.0) * np.log(u) - 0.5 * df * u**2)
        return density * _normal_range_cdf(q * u, k)

    previous = None
    panels = 8
    while panels <= 4096:
        estimate = _composite_gl(integrand, 0.0, u_max, panels)
        if previous is not None and abs(estimate - previous) < 0.5 * _QUAD_TOL:
            return float(min(max(estimate, 0.0), 1.0))
        previous = estimate
        panels *= 2
    raise StatsError(f"studentized_range_cdf failed to converge (q={q}, k={k}, df={df})")


def tukey_hsd(groups, labels=None, *, alpha: float = DEFAULT_ALPHA) -> PairwiseMatrix:
    """Tukey's honest-significant-difference pairwise test."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise StatsError("tukey_hsd needs >= 2 groups with n >= 2 each")
    labels = list(labels) if labels is not None else [f"group{i}" for i in range(k)]
    _, ssw, _, df2 = _anova_sums(groups)
    ms_within = ssw / df2
    raw = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i + 1, k):
            diff = abs(groups[i].mean() - groups[j].mean())
            if ms_within <= 0:
                p = 1.0 if diff == 0 else 0.0
            else:
                se = math.sqrt(ms_within / 2.0 * (1.0 / len(groups[i]) + 1.0 / len(groups[j])))
                q = diff / se
                p = 1.0 - studentized_range_cdf(q, k, df2) if q > 0 else 1.0
            raw[i, j] = raw[j, i] = min(max(p, 0.0), 1.0)
    return PairwiseMatrix(labels=labels, raw_p=raw, adjusted_p=raw.copy(), method="tukey-hsd")


# ------------------------------------------------------------ adjustment


def holm_adjust(p_values) -> list[float]:
    """Step-down Holm adjustment with enforced monotonicity, clipped to 1."""
    p = np.asarray(list(p_values), dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted.tolist()


# ------------------------------------------------------------- routing


@dataclass
class AnalysisReport:
    branch: str  # "parametric" | "nonparametric"
    screens: list[TestResult]
    omnibus: TestResult
    posthoc: PairwiseMatrix | None = None
    notes: list[str] = field(default_factory=list)
    alpha: float = DEFAULT_ALPHA


def route_analysis(
    groups,
    *,
    labels=None,
    alpha: float = DEFAULT_ALPHA,
    paired: bool = False,
) -> AnalysisReport:
    """Screen each group with Anderson-Darling and branch accordingly.

    Any group that rejects normality (or cannot be screened) sends the whole
    comparison down the non-parametric branch.  Paired designs compare exactly
    two equal-length samples; independent designs run an omnibus test over k
    groups and a pairwise post hoc when the omnibus rejects.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if paired and (len(groups) != 2 or len(groups[0]) != len(groups[1])):
        raise StatsError("paired analysis needs exactly two equal-length samples")
    notes: list[str] = []
    screens: list[TestResult] = []
    normal = True
    for i, g in enumerate(groups):
        try:
            screen = anderson_darling(g, alpha=alpha)
        except StatsError as exc:
            notes.append(f"group {i}: normality not screenable ({exc}); treated as non-normal")
            normal = False
            continue
        screens.append(screen)
        if screen.reject_null:
            normal = False
    branch = "parametric" if normal else "nonparametric"

    posthoc = None
    if paired:
        x, y = groups
        test = paired_t if branch == "parametric" else wilcoxon_signed_rank
        try:
            omnibus = test(x, y, alpha=alpha)
        except StatsError as exc:
            # identical runs carry no information; report as fail-to-reject
            notes.append(f"{test.__name__} degenerate ({exc}); reported as fail-to-reject")
            omnibus = _result(test.__name__, 0.0, 1.0, alpha, (len(x),), note=str(exc))
    else:
        if branch == "parametric":
            omnibus = anova_oneway(groups, alpha=alpha)
            if omnibus.reject_null:
                posthoc = tukey_hsd(groups, labels, alpha=alpha)
        else:
            omnibus = kruskal_wallis(groups, alpha=alpha)
            if omnibus.reject_null:
                posthoc = dunn_posthoc(groups, labels, alpha=alpha)
    return AnalysisReport(
        branch=branch, screens=screens, omnibus=omnibus, posthoc=posthoc, notes=notes, alpha=alpha
    )


# -------------------------------------------------------------- export


def _matrix_payload(matrix: PairwiseMatrix | None):
    if matrix is None:
        return None
    def rows(m):
        return [[None if math.isnan(v) else v for v in row] for row in m.tolist()]
    return {
        "labels": matrix.labels,
        "raw_p": rows(matrix.raw_p),
        "adjusted_p": rows(matrix.adjusted_p),
        "method": matrix.method,
    }


def _test_payload(result: TestResult):
    return {
        "name": result.name,
        "statistic": None if math.isinf(result.statistic) else result.statistic,
        "p_value": result.p_value,
        "alpha": result.alpha,
        "reject_null": result.reject_null,
        "n": list(result.n),
        "note": result.note,
    }


def report_payload(report: AnalysisReport) -> dict:
    return {
        "branch": report.branch,
        "alpha": report.alpha,
        "screens": [_test_payload(s) for s in report.screens],
        "omnibus": _test_payload(report.omnibus),
        "posthoc": _matrix_payload(report.posthoc),
        "notes": report.notes,
    }


def write_stats_json(reports: dict[str, AnalysisReport], path: str | Path, *, alpha: float = DEFAULT_ALPHA) -> None:
    payload = {"alpha": alpha, "analyses": {name: report_payload(r) for name, r in sorted(reports.items())}}
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
