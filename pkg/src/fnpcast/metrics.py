"""Accuracy and calibration metrics for probabilistic forecasts."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import ContractError

LOG_SCORE_CAP = 10.0
GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass
class EvaluationRecord:
    season_id: str
    week: int
    horizon: int
    truth: float
    dist: object  # PredictiveDistribution

    def __post_init__(self):
        if not np.isfinite(self.truth):
            raise ContractError("truth must be finite")


@dataclass
class CalibrationCurve:
    levels: np.ndarray
    coverage: np.ndarray

    def rows(self):
        return list(zip(self.levels.tolist(), self.coverage.tolist()))


def _nonempty(records):
    records = list(records)
    if not records:
        raise ContractError("no evaluation records")
    return records


def _truths_and_points(records):
    records = _nonempty(records)
    y = np.array([r.truth for r in records], dtype=np.float64)
    yhat = np.array([r.dist.mean() for r in records], dtype=np.float64)
    return y, yhat


def rmse(records):
    y, yhat = _truths_and_points(records)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mape(records):
    """Mean absolute percentage error; zero truths are excluded with a warning."""
    y, yhat = _truths_and_points(records)
    keep = y != 0
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} record(s) with zero truth excluded from MAPE",
                      stacklevel=2)
    if not keep.any():
        return float("nan")
    return float(np.mean(np.abs(y[keep] - yhat[keep]) / np.abs(y[keep])))


def record_log_score(dist, truth, cap=LOG_SCORE_CAP):
    """``-log P(truth - 0.5 <= Y <= truth + 0.5)``, analytic per component, capped."""
    sd = dist.stds
    mass = np.mean(ndtr((truth + 0.5 - dist.means) / sd) - ndtr((truth - 0.5 - dist.means) / sd))
    if mass <= 0:
        return cap
    return float(min(-np.log(mass), cap))


def log_score(records, cap=LOG_SCORE_CAP):
    records = _nonempty(records)
    return float(np.mean([record_log_score(r.dist, r.truth, cap) for r in records]))


def coverage_matrix(draws, truth, levels=GRID):
    """Boolean coverage of ``truth`` by the equal-tailed interval at each level.

    Level 0 is the zero-width interval at the median.
    """
    draws = np.asarray(draws, dtype=np.float64)
    q = np.quantile(draws, np.concatenate([(1 - levels) / 2, (1 + levels) / 2]))
    lo, hi = q[: len(levels)], q[len(levels):]
    return (lo <= truth) & (truth <= hi)


def calibration_curve(records, levels=GRID):
    """Fraction of truths inside each level's equal-tailed interval."""
    records = _nonempty(records)
    levels = np.asarray(levels, dtype=np.float64)
    hits = np.zeros(len(levels))
    for r in records:
        if r.dist.draws is None:
            raise ContractError("calibration needs realized draws")
        hits += coverage_matrix(r.dist.draws, r.truth, levels)
    return CalibrationCurve(levels, hits / len(records))


def calibration_score(curve):
    """``0.01 * sum |k(c) - c|`` over the 101-point grid."""
    levels = np.asarray(curve.levels, dtype=np.float64)
    if levels.shape != GRID.shape or not np.allclose(levels, GRID):
        raise ContractError("calibration score needs the full 0.00..1.00 grid in 0.01 steps")
    return float(0.01 * np.sum(np.abs(np.asarray(curve.coverage) - levels)))


def coverage(records, confidence):
    """Empirical coverage of the equal-tailed ``confidence`` interval."""
    curve = calibration_curve(records, levels=np.array([confidence]))
    return float(curve.coverage[0])


def is_over_dispersed(curve, threshold=0.2):
    """Coverage at or above nominal everywhere with a large calibration gap."""
    gap = np.asarray(curve.coverage) - np.asarray(curve.levels)
    return bool(np.all(gap >= 0) and calibration_score(curve) > threshold)


def summarize_horizon(records):
    records = _nonempty(records)
    curve = calibration_curve(records)
    return {
        "rmse": rmse(records),
        "mape": mape(records),
        "ls": log_score(records),
        "cs": calibration_score(curve),
    }, curve
