"""defectcast: forecast a project's defect density from its commit history.

The package labels defect lifecycles in ingested commit/issue tables, builds
regular-interval time-series panels, forecasts defect density with native TSA
and Bayesian models (or external foundation-model backends), evaluates
everything walk-forward, and runs the accompanying statistical,
feature-importance, and ablation analyses.
"""

__version__ = "0.1.0"

from .errors import (
    BackendError,
    ConfigError,
    DegenerateSeriesError,
    EngineError,
    FilterError,
    FitError,
    LoadError,
    PanelError,
    ProtocolError,
    SchemaError,
    StatsError,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "DegenerateSeriesError",
    "EngineError",
    "FilterError",
    "FitError",
    "LoadError",
    "PanelError",
    "ProtocolError",
    "SchemaError",
    "StatsError",
    "__version__",
]
