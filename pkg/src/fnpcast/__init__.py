"""Probabilistic forecasting of seasonal epidemic curves with a functional neural process."""

from .data import load_model, parse_csv, realtime_eval_points, save_model, segment_seasons
from .estimator import FNPForecaster
from .exceptions import (CheckpointError, ContractError, DataFormatError, NumericDomainError,
                         TrainingDivergedError)
from .inference import PredictiveDistribution, autoregressive_forecast, forecast, interval, summarize
from .metrics import calibration_curve, calibration_score, log_score, mape, rmse
from .model import FittedModel, Hyperparams
from .training import train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ContractError", "DataFormatError", "FNPForecaster", "FittedModel",
    "Hyperparams", "NumericDomainError", "PredictiveDistribution", "TrainingDivergedError",
    "autoregressive_forecast", "calibration_curve", "calibration_score", "forecast", "interval",
    "load_model", "log_score", "mape", "parse_csv", "realtime_eval_points", "rmse", "save_model",
    "segment_seasons", "summarize", "train",
]
