"""Native ARIMA/ARIMAX/SARIMA/SARIMAX estimation and forecasting.

Estimation is conditional-sum-of-squares: the series is differenced, the
exogenous effect (if any) is removed by an ordinary least squares
pre-regression, and the Gaussian negative log-likelihood of the ARMA
innovations is minimized by derivative-free simplex search with jittered
restarts.  The process mean of a stationary (d = D = 0) model and the
innovation variance are concentrated out in closed form, so the optimizer
only ever sees the AR/MA coefficients.

Parameter layout everywhere: ``[ar(p), ma(q), seasonal_ar(P), seasonal_ma(Q)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..errors import DegenerateSeriesError, FitError
from .base import ForecastResult, Kind, ModelSpec

ROOT_MARGIN = 1e-6  # characteristic roots must be strictly outside |z| = 1 + margin
Z90 = 1.6448536269514722  # two-sided 90% normal quantile

_DEGENERATE_TOL = 1e-12


def difference(series, d: int, seasonal: tuple[int, int] | None = None) -> np.ndarray:
    """Apply ``D``-fold seasonal then ``d``-fold regular differencing."""
    values, _ = _difference_stages(np.asarray(series, dtype=float), d, seasonal)
    return values[-1]


def _difference_stages(series: np.ndarray, d: int, seasonal: tuple[int, int] | None):
    D, s = seasonal if seasonal is not None else (0, 1)
    if len(series) <= d + D * s:
        raise FitError(f"series of length {len(series)} too short to difference (d={d}, D={D}, s={s})")
    stages = [series]
    ops: list[tuple[str, int]] = []
    current = series
    for _ in range(D):
        current = current[s:] - current[:-s]
        stages.append(current)
        ops.append(("seasonal", s))
    for _ in range(d):
        current = current[1:] - current[:-1]
        stages.append(current)
        ops.append(("regular", 1))
    return stages, ops


def _integrate(forecasts: np.ndarray, stages: list[np.ndarray], ops: list[tuple[str, int]]) -> np.ndarray:
    """Undo the differencing chain on a block of forecasts."""
    values = list(forecasts)
    for (op, s), before in zip(reversed(ops), reversed(stages[:-1])):
        history = list(before)
        restored = []
        for v in values:
            base = history[-1] if op == "regular" else history[-s]
            history.append(v + base)
            restored.append(history[-1])
        values = restored
    return np.asarray(values, dtype=float)


def _expand_product(nonseasonal: np.ndarray, seasonal: np.ndarray, s: int) -> np.ndarray:
    """Lag coefficients of (1 ± a(B)) * (1 ± A(B^s)), without the leading 1.

    Inputs and output use the convention "coefficient of B^i at index i-1";
    signs are the caller's concern (the same expansion serves AR and MA).
    """
    if len(seasonal) == 0:
        return np.asarray(nonseasonal, dtype=float)
    poly_a = np.concatenate(([1.0], nonseasonal))
    poly_b = np.zeros(len(seasonal) * s + 1)
    poly_b[0] = 1.0
    for j, coef in enumerate(seasonal, start=1):
        poly_b[j * s] = coef
    # convolution of lowest-first coefficient arrays is the polynomial product
    return np.convolve(poly_a, poly_b)[1:]


def _roots_outside(lag_coef: np.ndarray, sign: float, season: int = 1) -> bool:
    """True when 1 + sign * sum(c_i x^i) has all roots outside the unit circle.

    For a seasonal factor the polynomial variable is x = z**season, so the
    stationarity margin on z compounds to (1 + margin)**season on x.
    Degrees 1 and 2 are solved analytically (this sits in the optimizer's
    inner loop); higher degrees fall back to the companion matrix.
    """
    c = sign * np.asarray(lag_coef, dtype=float)
    nz = np.nonzero(c)[0]
    if len(nz) == 0:
        return True
    c = c[: nz[-1] + 1]
    thr = (1.0 + ROOT_MARGIN) ** season
    if len(c) == 1:
        return abs(c[0]) * thr < 1.0  # root of 1 + c1 x is -1/c1
    if len(c) == 2:
        b, a = c[0], c[1]  # a x^2 + b x + 1
        disc = b * b - 4.0 * a
        if disc >= 0.0:
            sq = np.sqrt(disc)
            return abs((-b + sq) / (2.0 * a)) > thr and abs((-b - sq) / (2.0 * a)) > thr
        return 1.0 / abs(a) > thr * thr  # complex pair: |root|^2 = |1/a|
    roots = np.roots(np.concatenate(([1.0], c))[::-1])
    return bool(np.all(np.abs(roots) > thr))


def _split_params(params: np.ndarray, order, seasonal):
    p, _, q = order
    P, _, Q, _ = seasonal if seasonal is not None else (0, 0, 0, 1)
    if len(params) != p + q + P + Q:
        raise ValueError(f"expected {p + q + P + Q} parameters, got {len(params)}")
    ar = params[:p]
    ma = params[p : p + q]
    sar = params[p + q : p + q + P]
    sma = params[p + q + P :]
    return ar, ma, sar, sma


def _full_polys(params: np.ndarray, order, seasonal):
    ar, ma, sar, sma = _split_params(params, order, seasonal)
    s = seasonal[3] if seasonal is not None else 1
    ar_full = _expand_product(-ar, -sar, s)  # 1 - a(B) form: stored as the a_i
    ar_full = -ar_full
    ma_full = _expand_product(ma, sma, s)
    return ar_full, ma_full


def _admissible(params: np.ndarray, order, seasonal) -> bool:
    ar, ma, sar, sma = _split_params(params, order, seasonal)
    s = seasonal[3] if seasonal is not None else 1
    return (
        _roots_outside(-ar, 1.0)
        and _roots_outside(-sar, 1.0, season=s)
        and _roots_outside(ma, 1.0)
        and _roots_outside(sma, 1.0, season=s)
    )


def _min_root_modulus(params: np.ndarray, order, seasonal) -> float:
    """Smallest characteristic-root modulus (mapped to the z scale) across
    the four fitted lag polynomials; inf when there are no coefficients."""
    ar, ma, sar, sma = _split_params(params, order, seasonal)
    s = seasonal[3] if seasonal is not None else 1
    smallest = np.inf
    for coefs, season in ((-ar, 1), (ma, 1), (-sar, s), (sma, s)):
        c = np.asarray(coefs, dtype=float)
        nz = np.nonzero(c)[0]
        if len(nz) == 0:
            continue
        roots = np.roots(np.concatenate(([1.0], c[: nz[-1] + 1]))[::-1])
        if len(roots):
            smallest = min(smallest, float(np.min(np.abs(roots)) ** (1.0 / season)))
    return smallest


def _css_residuals(w: np.ndarray, ar_full: np.ndarray, ma_full: np.ndarray) -> tuple[np.ndarray, int]:
    """Innovations conditioned on the first max-AR-lag observations.

    Pre-sample innovations are zero; the returned array keeps them so the
    effective residuals live at indices >= start.  The MA feedback
    e_t = u_t - sum_j b_j e_{t-j} is an IIR filter, so lfilter does the
    recursion (zero initial state = zero pre-sample innovations).
    """
    n = len(w)
    start = len(ar_full)
    if n <= start:
        raise FitError("series too short for the requested AR order")
    u = w[start:].copy()
    for i, a in enumerate(ar_full, start=1):
        if a != 0.0:
            u -= a * w[start - i : n - i]
    e = np.zeros(n)
    if len(ma_full) == 0 or not np.any(ma_full):
        e[start:] = u
        return e, start
    e[start:] = lfilter([1.0], np.concatenate(([1.0], ma_full)), u)
    return e, start


def _nll_from_residuals(e: np.ndarray, start: int) -> float:
    resid = e[start:]
    m = len(resid)
    sigma2 = float(resid @ resid) / m
    if not np.isfinite(sigma2) or sigma2 <= 0.0:
        return np.inf
    return 0.5 * m * (np.log(2.0 * np.pi * sigma2) + 1.0)


def css_negloglik(params, series, order, seasonal=None) -> float:
    """Conditional-sum-of-squares Gaussian NLL, +inf outside the admissible region.

    The series is assumed already differenced and centered; the innovation
    variance is concentrated at its MLE (the mean squared innovation).
    """
    params = np.asarray(params, dtype=float)
    w = np.asarray(series, dtype=float)
    if not _admissible(params, order, seasonal):
        return np.inf
    ar_full, ma_full = _full_polys(params, order, seasonal)
    e, start = _css_residuals(w, ar_full, ma_full)
    return _nll_from_residuals(e, start)


def _concentrated(params, w, order, seasonal, include_mean):
    """(nll, mu_hat, residuals, start) with the mean solved in closed form.

    The innovation operator is linear in the series, so the residuals of
    ``w - mu`` equal ``L(w) - mu * L(1)`` and the CSS-optimal mean is a ratio
    of inner products.  This keeps the fit exactly translation-equivariant.
    """
    params = np.asarray(params, dtype=float)
    if not _admissible(params, order, seasonal):
        return np.inf, 0.0, None, 0
    ar_full, ma_full = _full_polys(params, order, seasonal)
    e_w, start = _css_residuals(w, ar_full, ma_full)
    if not include_mean:
        return _nll_from_residuals(e_w, start), 0.0, e_w, start
    e_one, _ = _css_residuals(np.ones_like(w), ar_full, ma_full)
    g = e_one[start:]
    gg = float(g @ g)
    mu = float(e_w[start:] @ g) / gg if gg > 0 else 0.0
    e = e_w - mu * e_one
    return _nll_from_residuals(e, start), mu, e, start


@dataclass
class TsaFit:
    """A fitted ARIMA-family model plus everything needed to forecast from it."""

    spec: ModelSpec
    params: np.ndarray  # optimizer layout: ar, ma, sar, sma
    mu: float
    beta: np.ndarray | None  # OLS exogenous coefficients (intercept first)
    sigma2: float
    loglik: float
    aic: float
    residuals: np.ndarray = field(repr=False)  # effective innovations (post warm-up)
    n_obs: int = 0
    _stages: list[np.ndarray] = field(default_factory=list, repr=False)
    _ops: list[tuple[str, int]] = field(default_factory=list, repr=False)
    _e_full: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        extra = 1 if self.mu_estimated else 0
        n_beta = len(self.beta) if self.beta is not None else 0
        return len(self.params) + extra + n_beta + 1  # +1 innovation variance

    @property
    def selection_score(self) -> float:
        """Order-selection criterion: n log(sigma^2) + k log(n).

        Raw CSS likelihoods condition on order-dependent warm-ups, so their
        AICs are not comparable across orders, and the 2k penalty is too weak
        against the CSS small-sample pathology where near-unit-circle AR/MA
        roots buy spurious variance reductions.  The consistent (BIC-sized)
        penalty on a common sample size handles both.
        """
        return self.n_obs * float(np.log(self.sigma2)) + self.n_params * float(np.log(self.n_obs))

    @property
    def mu_estimated(self) -> bool:
        d = self.spec.order[1]
        D = self.spec.seasonal[1] if self.spec.seasonal else 0
        return d + D == 0


def _exog_design(features: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(features)), features])


def _panel_arrays(data) -> tuple[np.ndarray, np.ndarray | None]:
    if hasattr(data, "target"):
        features = np.asarray(data.features, dtype=float)
        return np.asarray(data.target, dtype=float), features
    return np.asarray(data, dtype=float), None


def fit_tsa(
    data,
    spec: ModelSpec,
    *,
    seed: int = 0,
    restarts: int = 5,
    maxiter: int = 500,
    xatol: float = 1e-6,
    fatol: float = 1e-8,
) -> TsaFit:
    """Fit a TSA-family spec on a panel (or bare series) by CSS.

    Exogenous kinds regress the target on the panel features first and model
    the OLS residual; the fitted regression is added back at forecast time
    with the observed future feature rows.
    """
    y, features = _panel_arrays(data)
    p, d, q = spec.order
    P, D, Q, s = spec.seasonal if spec.seasonal is not None else (0, 0, 0, 1)
    n_coef = p + q + P + Q
    n_regressors = 0
    if spec.uses_exogenous:
        if features is None:
            raise FitError(f"{spec.label} needs panel features")
        n_regressors = features.shape[1] + 1
    if len(y) < 8 + n_coef + n_regressors:
        raise FitError(
            f"{spec.label}: series of length {len(y)} too short "
            f"(needs >= {8 + n_coef + n_regressors})"
        )
    if float(np.var(y)) < _DEGENERATE_TOL:
        raise DegenerateSeriesError(f"{spec.label}: series is constant")

    beta = None
    u = y
    if spec.uses_exogenous:
        design = _exog_design(features)
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        u = y - design @ beta

    stages, ops = _difference_stages(u, d, (D, s) if D else None)
    w = stages[-1]
    if float(np.var(w)) < _DEGENERATE_TOL and n_coef > 0:
        raise DegenerateSeriesError(f"{spec.label}: differenced series is constant")
    include_mean = d + D == 0

    if n_coef == 0:
        nll, mu, e, start = _concentrated(np.zeros(0), w, spec.order, spec.seasonal, include_mean)
        best_x = np.zeros(0)
    else:
        rng = np.random.default_rng(seed)
        objective = lambda x: _concentrated(x, w, spec.order, spec.seasonal, include_mean)[0]
        best_x, best_nll = None, np.inf
        for r in range(restarts):
            x0 = np.zeros(n_coef) if r == 0 else rng.uniform(-0.25, 0.25, n_coef)
            result = minimize(
                objective,
                x0,
                method="Nelder-Mead",
                options={"maxiter": maxiter, "xatol": xatol, "fatol": fatol},
            )
            if np.isfinite(result.fun) and result.fun < best_nll:
                best_nll, best_x = float(result.fun), np.asarray(result.x)
        if best_x is None:
            raise FitError(f"{spec.label}: optimizer produced no finite fit after {restarts} restarts")
        nll, mu, e, start = _concentrated(best_x, w, spec.order, spec.seasonal, include_mean)

    if e is None or not np.isfinite(nll):
        raise FitError(f"{spec.label}: non-finite likelihood at the optimum")
    resid = e[start:]
    sigma2 = float(resid @ resid) / len(resid)
    if sigma2 <= 0.0:
        raise DegenerateSeriesError(f"{spec.label}: zero innovation variance")
    k = n_coef + (1 if include_mean else 0) + n_regressors + 1
    return TsaFit(
        spec=spec,
        params=best_x,
        mu=mu,
        beta=beta,
        sigma2=sigma2,
        loglik=-nll,
        aic=2.0 * nll + 2.0 * k,
        residuals=resid,
        n_obs=len(y),
        _stages=stages,
        _ops=ops,
        _e_full=e,
    )


def _psi_weights(ar_full: np.ndarray, ma_full: np.ndarray, ops, h: int) -> np.ndarray:
    """MA(inf) weights of the full (differenced) process, for interval widths."""
    poly = np.concatenate(([1.0], -np.asarray(ar_full)))  # 1 - a(B) as coefficient array
    for op, s in ops:
        diff = np.zeros(s + 1)
        diff[0], diff[s] = 1.0, -1.0
        poly = np.convolve(poly, diff)
    c = poly[1:]  # phi*(B) = 1 + sum c_i B^i
    theta = np.asarray(ma_full)
    psi = np.zeros(h)
    psi_prev = [1.0]
    for j in range(1, h):
        val = theta[j - 1] if j - 1 < len(theta) else 0.0
        for i in range(1, min(j, len(c)) + 1):
            val -= c[i - 1] * psi_prev[j - i]
        psi_prev.append(val)
    psi[: len(psi_prev)] = psi_prev[:h]
    return psi


def forecast_tsa(fit: TsaFit, h: int, future_features: np.ndarray | None = None, *, origin: int | None = None) -> ForecastResult:
    """Iterated linear prediction, integrated back to the original scale."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if fit.spec.uses_exogenous:
        if future_features is None or len(future_features) != h:
            raise FitError(f"{fit.spec.label}: forecasting needs {h} future exogenous rows")
    ar_full, ma_full = _full_polys(fit.params, fit.spec.order, fit.spec.seasonal)
    w = fit._stages[-1]
    wt = w - fit.mu
    e = fit._e_full
    n = len(w)
    extended = wt.tolist()
    preds = []
    for k in range(1, h + 1):
        acc = 0.0
        for i, a in enumerate(ar_full, start=1):
            idx = n + k - 1 - i
            acc += a * extended[idx] if idx >= 0 else 0.0
        for j, b in enumerate(ma_full, start=1):
            idx = n + k - 1 - j
            if 0 <= idx < n:
                acc += b * e[idx]
        extended.append(acc)
        preds.append(acc + fit.mu)
    integrated = _integrate(np.asarray(preds), fit._stages, fit._ops)

    if fit.beta is not None:
        design = _exog_design(np.asarray(future_features, dtype=float))
        integrated = integrated + design @ fit.beta

    psi = _psi_weights(ar_full, ma_full, fit._ops, h)
    var = fit.sigma2 * np.cumsum(psi**2)
    half = Z90 * np.sqrt(var)
    return ForecastResult(
        origin=origin if origin is not None else fit.n_obs,
        horizon=h,
        points=integrated,
        lower=integrated - half,
        upper=integrated + half,
    )


def select_order(panel, kind, *, seed: int = 0, max_pq: int = 3, max_d: int = 2) -> ModelSpec:
    """Information-criterion grid search over (p, d, q) and, for seasonal
    kinds, (P, D, Q).

    The seasonal period is tied to the panel's window length.  Candidates are
    compared on ``TsaFit.selection_score`` and screened with a coarser
    optimizer tolerance than a final fit (the winner is returned as a spec and
    refit at full precision by callers); ties are broken by fewer parameters,
    then lexicographically.
    """
    kind = Kind.parse(kind)
    seasonal_kind = kind in (Kind.SARIMA, Kind.SARIMAX)
    s = panel.grid.length.season if seasonal_kind else None
    seasonal_grid = (
        [(P, D, Q) for P in (0, 1) for D in (0, 1) for Q in (0, 1)] if seasonal_kind else [(0, 0, 0)]
    )
    best = None
    for p in range(max_pq + 1):
        for d in range(max_d + 1):
            for q in range(max_pq + 1):
                for P, D, Q in seasonal_grid:
                    try:
                        spec = ModelSpec.for_kind(
                            kind, order=(p, d, q), seasonal=(P, D, Q, s) if seasonal_kind else None
                        )
                        fit = fit_tsa(
                            panel, spec, seed=seed, restarts=3, maxiter=200, xatol=1e-4, fatol=1e-6
                        )
                    except (FitError, ValueError):
                        continue
                    if p + q + P + Q > 0 and _min_root_modulus(fit.params, spec.order, spec.seasonal) < 1.001:
                        continue  # CSS optimum pinned to the admissibility boundary
                    key = (fit.selection_score, p + q + P + Q, (p, d, q, P, D, Q))
                    if best is None or key < best[0]:
                        best = (key, spec)
    if best is None:
        raise FitError(f"select_order: every candidate {kind.value} fit failed")
    return best[1]
