"""Univariate daily emissions forecasting: grey, Box-Jenkins, dense, recurrent and forest models."""

from .data import TimeSeries, describe, load_series, window_and_split
from .harness import ExperimentConfig, make_experiment, run_experiment
from .metrics import evaluate
from .models import MODEL_NAMES, fit_model

__all__ = [
    "ExperimentConfig",
    "MODEL_NAMES",
    "TimeSeries",
    "describe",
    "evaluate",
    "fit_model",
    "load_series",
    "make_experiment",
    "run_experiment",
    "window_and_split",
]
__version__ = "0.1.0"
