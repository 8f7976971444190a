"""Model specifications and the shared forecast result type."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

INTERVAL_LEVEL = 0.90  # single reporting level for all interval-producing models


class Family(enum.Enum):
    TSA = "tsa"
    BAYESIAN = "bayesian"
    FOUNDATION = "foundation"


class Kind(enum.Enum):
    ARIMA = "ARIMA"
    ARIMAX = "ARIMAX"
    SARIMA = "SARIMA"
    SARIMAX = "SARIMAX"
    BDLT = "BDLT"
    BETS = "BETS"
    BDLM = "BDLM"
    BDGLM = "BDGLM"
    EXTERNAL = "EXTERNAL"

    @classmethod
    def parse(cls, value: "Kind | str") -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls[value.upper()]
        except KeyError:
            raise ValueError(f"unknown model kind {value!r}") from None


TSA_KINDS = {Kind.ARIMA, Kind.ARIMAX, Kind.SARIMA, Kind.SARIMAX}
BAYESIAN_KINDS = {Kind.BDLT, Kind.BETS, Kind.BDLM, Kind.BDGLM}
SEASONAL_KINDS = {Kind.SARIMA, Kind.SARIMAX}
EXOGENOUS_KINDS = {Kind.ARIMAX, Kind.SARIMAX, Kind.BDLM, Kind.BDGLM}


@dataclass(frozen=True)
class Discounts:
    """Per-block state evolution discounts, each in (0.8, 1.0]."""

    level: float = 0.98
    trend: float = 0.98
    seasonal: float = 0.95
    regression: float = 0.95

    def __post_init__(self):
        for name, value in vars(self).items():
            if not 0.8 < value <= 1.0:
                raise ValueError(f"discount {name}={value} outside (0.8, 1.0]")


@dataclass(frozen=True)
class ModelSpec:
    kind: Kind
    order: tuple[int, int, int] = (0, 0, 0)  # (p, d, q)
    seasonal: tuple[int, int, int, int] | None = None  # (P, D, Q, s)
    discounts: Discounts | None = None
    damping: float | None = None
    external_name: str | None = None

    def __post_init__(self):
        if (self.seasonal is not None) != (self.kind in SEASONAL_KINDS):
            raise ValueError(f"seasonal order must be present iff kind is seasonal ({self.kind})")
        if (self.discounts is not None) != (self.family is Family.BAYESIAN):
            raise ValueError("discounts must be present iff the model family is bayesian")
        if self.damping is not None and not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping {self.damping} outside (0, 1]")
        if self.kind is Kind.EXTERNAL and not self.external_name:
            raise ValueError("external models need a backend name")
        if any(v < 0 for v in self.order):
            raise ValueError(f"negative order {self.order}")
        if self.seasonal is not None and (any(v < 0 for v in self.seasonal) or self.seasonal[3] < 1):
            raise ValueError(f"bad seasonal order {self.seasonal}")

    @property
    def family(self) -> Family:
        if self.kind in TSA_KINDS:
            return Family.TSA
        if self.kind in BAYESIAN_KINDS:
            return Family.BAYESIAN
        return Family.FOUNDATION

    @property
    def uses_exogenous(self) -> bool:
        return self.kind in EXOGENOUS_KINDS

    @property
    def label(self) -> str:
        if self.kind is Kind.EXTERNAL:
            return self.external_name or "EXTERNAL"
        return self.kind.value

    @classmethod
    def for_kind(
        cls,
        kind: "Kind | str",
        *,
        order: tuple[int, int, int] = (0, 0, 0),
        seasonal_period: int | None = None,
        seasonal: tuple[int, int, int, int] | None = None,
        external_name: str | None = None,
    ) -> "ModelSpec":
        """Spec with the documented defaults filled in for the given kind."""
        kind = Kind.parse(kind)
        if kind in SEASONAL_KINDS and seasonal is None:
            if seasonal_period is None:
                raise ValueError(f"{kind.value} needs a seasonal period")
            seasonal = (0, 0, 0, seasonal_period)
        discounts = Discounts() if kind in BAYESIAN_KINDS else None
        damping = 0.9 if kind is Kind.BDLT else None
        return cls(
            kind=kind,
            order=order,
            seasonal=seasonal,
            discounts=discounts,
            damping=damping,
            external_name=external_name,
        )


@dataclass(frozen=True)
class ForecastResult:
    origin: int
    horizon: int
    points: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", points)
        if points.shape != (self.horizon,):
            raise ValueError(f"expected {self.horizon} points, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("non-finite forecast points")
        for name in ("lower", "upper"):
            bound = getattr(self, name)
            if bound is not None:
                object.__setattr__(self, name, np.asarray(bound, dtype=float))


@dataclass
class FitDiagnostics:
    """Common fit outputs kept by every concrete fitted model."""

    loglik: float
    aic: float
    residuals: np.ndarray = field(repr=False)
