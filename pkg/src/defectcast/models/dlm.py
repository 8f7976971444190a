"""Discount-factor dynamic linear models: damped trend, exponential-smoothing
style level/trend/seasonal, and time-varying-coefficient regression.

The filter is the conjugate normal / inverse-gamma recursion with the state
evolution covariance set block-wise by discount factors, W_t =
((1 - delta)/delta) * block of G C G', and the observation variance learned
online by variance discounting.  One-step predictive distributions are
Student-t, which is also what the forecast intervals use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..errors import FilterError, FitError
from .base import Discounts, ForecastResult, Kind, ModelSpec

PRIOR_VARIANCE = 1e4
VARIANCE_DISCOUNT = 0.99
PRIOR_DF = 1.0
PRIOR_OBS_VARIANCE = 1.0


@dataclass(frozen=True)
class DlmStructure:
    """State layout of one model: system matrix, observation row, discount blocks."""

    G: np.ndarray
    F: np.ndarray  # static observation vector; regression entries overwritten per step
    blocks: tuple[tuple[slice, float], ...]
    regression: slice | None = None  # state indices fed by exogenous features

    @property
    def dim(self) -> int:
        return len(self.F)

    def obs_row(self, x: np.ndarray | None) -> np.ndarray:
        if self.regression is None:
            return self.F
        if x is None:
            raise FitError("structure has regression states but no feature row was given")
        F = self.F.copy()
        F[self.regression] = x
        return F


def structure_for(spec: ModelSpec, n_features: int = 0, season: int | None = None) -> DlmStructure:
    d = spec.discounts or Discounts()
    if spec.kind is Kind.BDLT:
        phi = spec.damping if spec.damping is not None else 0.9
        G = np.array([[1.0, phi], [0.0, phi]])
        F = np.array([1.0, 0.0])
        blocks = ((slice(0, 1), d.level), (slice(1, 2), d.trend))
        return DlmStructure(G=G, F=F, blocks=blocks)
    if spec.kind is Kind.BETS:
        if season is None or season < 2:
            raise FitError("BETS needs a seasonal period >= 2")
        k = 2 + season
        G = np.zeros((k, k))
        G[0, 0] = G[0, 1] = G[1, 1] = 1.0  # linear growth
        G[2 : k - 1, 3:k] = np.eye(season - 1)  # rotate seasonal effects
        G[k - 1, 2] = 1.0
        F = np.zeros(k)
        F[0] = F[2] = 1.0
        blocks = ((slice(0, 1), d.level), (slice(1, 2), d.trend), (slice(2, k), d.seasonal))
        return DlmStructure(G=G, F=F, blocks=blocks)
    if spec.kind in (Kind.BDLM, Kind.BDGLM):
        k = 1 + n_features
        G = np.eye(k)
        F = np.zeros(k)
        F[0] = 1.0
        blocks = ((slice(0, 1), d.level), (slice(1, k), d.regression))
        return DlmStructure(G=G, F=F, blocks=blocks, regression=slice(1, k) if n_features else None)
    raise FitError(f"no DLM structure for kind {spec.kind}")


def _discounted_prior_cov(P: np.ndarray, blocks) -> np.ndarray:
    R = P.copy()
    for sl, delta in blocks:
        if delta < 1.0:
            R[sl, sl] = P[sl, sl] / delta
    return R


@dataclass
class DlmFit:
    spec: ModelSpec
    structure: DlmStructure
    m: np.ndarray  # final posterior mean
    C: np.ndarray  # final posterior covariance scale
    n: float  # variance-estimate degrees of freedom
    S: float  # observation variance estimate
    loglik: float
    aic: float
    residuals: np.ndarray = field(repr=False)  # one-step forecast errors
    filtered_means: np.ndarray = field(repr=False, default=None)
    filtered_covs: np.ndarray = field(repr=False, default=None)
    one_step_means: np.ndarray = field(repr=False, default=None)
    one_step_vars: np.ndarray = field(repr=False, default=None)


def filter_gaussian(
    y: np.ndarray,
    structure: DlmStructure,
    X: np.ndarray | None = None,
    *,
    m0: np.ndarray | None = None,
    C0: np.ndarray | None = None,
    n0: float = PRIOR_DF,
    S0: float = PRIOR_OBS_VARIANCE,
    variance_discount: float = VARIANCE_DISCOUNT,
    level_init: float | None = None,
):
    """Run the discount Kalman filter; returns means, covs, forecasts, errors, (n, S, loglik).

    The state prior is zero-mean with covariance ``PRIOR_VARIANCE * I`` except
    that the level starts at the first observation (or ``level_init``).
    """
    y = np.asarray(y, dtype=float)
    k = structure.dim
    m = np.zeros(k) if m0 is None else np.asarray(m0, dtype=float).copy()
    if m0 is None:
        m[0] = y[0] if level_init is None else level_init
    C = PRIOR_VARIANCE * np.eye(k) if C0 is None else np.asarray(C0, dtype=float).copy()
    n, S = float(n0), float(S0)
    G = structure.G

    T = len(y)
    means = np.empty((T, k))
    covs = np.empty((T, k, k))
    forecasts = np.empty(T)
    fvars = np.empty(T)
    errors = np.empty(T)
    loglik = 0.0
    for t in range(T):
        a = G @ m
        P = G @ C @ G.T
        R = _discounted_prior_cov(P, structure.blocks)
        F = structure.obs_row(X[t] if X is not None else None)
        f = float(F @ a)
        Q = float(F @ R @ F) + S
        e = y[t] - f
        loglik += stats.t.logpdf(e, df=n, scale=np.sqrt(Q))
        A = (R @ F) / Q
        n_new = variance_discount * n + 1.0
        S_new = S + (S / n_new) * (e * e / Q - 1.0)
        m = a + A * e
        C = (S_new / S) * (R - np.outer(A, A) * Q)
        C = 0.5 * (C + C.T)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(C)) and np.isfinite(S_new)):
            raise FilterError("non-finite filter state", step=t)
        n, S = n_new, S_new
        means[t], covs[t] = m, C
        forecasts[t], fvars[t], errors[t] = f, Q, e
    return means, covs, forecasts, fvars, errors, (n, S, float(loglik))


def dlm_filter(data, spec: ModelSpec, *, season: int | None = None) -> DlmFit:
    """Fit one of the Gaussian Bayesian kinds (BDLT, BETS, BDLM) by filtering."""
    if spec.kind not in (Kind.BDLT, Kind.BETS, Kind.BDLM):
        raise FitError(f"dlm_filter does not handle {spec.kind}")
    if hasattr(data, "target"):
        y = np.asarray(data.target, dtype=float)
        X = np.asarray(data.features, dtype=float) if spec.uses_exogenous else None
        if season is None and hasattr(data, "grid"):
            season = data.grid.length.season
    else:
        y = np.asarray(data, dtype=float)
        X = None
    structure = structure_for(spec, n_features=X.shape[1] if X is not None else 0, season=season)
    means, covs, forecasts, fvars, errors, (n, S, loglik) = filter_gaussian(y, structure, X)
    return DlmFit(
        spec=spec,
        structure=structure,
        m=means[-1],
        C=covs[-1],
        n=n,
        S=S,
        loglik=loglik,
        aic=-2.0 * loglik,
        residuals=errors,
        filtered_means=means,
        filtered_covs=covs,
        one_step_means=forecasts,
        one_step_vars=fvars,
    )


def forecast_dlm(fit: DlmFit, h: int, future_features: np.ndarray | None = None, *, origin: int | None = None) -> ForecastResult:
    """Evolve the posterior h steps; intervals come from the Student-t predictive."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    structure = fit.structure
    if structure.regression is not None:
        if future_features is None or len(future_features) != h:
            raise FitError(f"{fit.spec.label}: forecasting needs {h} future exogenous rows")
    a, R = fit.m.copy(), fit.C.copy()
    G = structure.G
    tq = stats.t.ppf(0.95, df=fit.n)
    points = np.empty(h)
    lower = np.empty(h)
    upper = np.empty(h)
    for step in range(h):
        a = G @ a
        P = G @ R @ G.T
        R = _discounted_prior_cov(P, structure.blocks)  # discounts keep compounding ahead
        F = structure.obs_row(future_features[step] if future_features is not None else None)
        f = float(F @ a)
        Q = float(F @ R @ F) + fit.S
        points[step] = f
        half = tq * np.sqrt(Q)
        lower[step], upper[step] = f - half, f + half
    return ForecastResult(
        origin=origin if origin is not None else len(fit.residuals),
        horizon=h,
        points=points,
        lower=lower,
        upper=upper,
    )
