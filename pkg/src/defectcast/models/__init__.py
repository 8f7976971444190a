"""Forecasting models: the TSA family, the Bayesian family, external backends."""

from __future__ import annotations

import numpy as np

from ..errors import FitError
from .arima import TsaFit, css_negloglik, difference, fit_tsa, forecast_tsa, select_order
from .backends import (
    BackendReply,
    NaiveBackend,
    SubprocessBackend,
    external_forecast,
)
from .base import Discounts, Family, ForecastResult, Kind, ModelSpec
from .dglm import DglmFit, dglm_poisson_filter, forecast_dglm, gamma_from_logmoments, logmoments_from_gamma
from .dlm import DlmFit, dlm_filter, filter_gaussian, forecast_dlm, structure_for

__all__ = [
    "BackendReply",
    "Discounts",
    "DglmFit",
    "DlmFit",
    "Family",
    "ForecastResult",
    "Kind",
    "ModelSpec",
    "NaiveBackend",
    "SubprocessBackend",
    "TsaFit",
    "css_negloglik",
    "dglm_poisson_filter",
    "difference",
    "dlm_filter",
    "external_forecast",
    "filter_gaussian",
    "fit_model",
    "fit_tsa",
    "forecast",
    "forecast_dglm",
    "forecast_dlm",
    "forecast_tsa",
    "gamma_from_logmoments",
    "logmoments_from_gamma",
    "select_order",
    "structure_for",
]


def fit_model(panel, spec: ModelSpec, *, seed: int = 0):
    """Fit any native spec on a panel; dispatches on the model family."""
    if spec.family is Family.TSA:
        return fit_tsa(panel, spec, seed=seed)
    if spec.kind is Kind.BDGLM:
        return dglm_poisson_filter(panel, spec)
    if spec.family is Family.BAYESIAN:
        return dlm_filter(panel, spec)
    raise FitError(f"{spec.label}: external models are forecast through a backend, not fit_model")


def forecast(fitted, h: int, future_features: np.ndarray | None = None, *, origin: int | None = None) -> ForecastResult:
    """Forecast from any fitted native model."""
    if isinstance(fitted, TsaFit):
        return forecast_tsa(fitted, h, future_features, origin=origin)
    if isinstance(fitted, DglmFit):
        return forecast_dglm(fitted, h, future_features, origin=origin)
    if isinstance(fitted, DlmFit):
        return forecast_dlm(fitted, h, future_features, origin=origin)
    raise FitError(f"cannot forecast from {type(fitted).__name__}")
