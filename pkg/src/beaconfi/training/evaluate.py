"""Positioning error metrics."""

from dataclasses import dataclass

import numpy as np


@dataclass
class Metrics:
    mae: float
    rmse: float
    p90: float
    n: int
    cdf_x: np.ndarray
    cdf_y: np.ndarray

    def as_dict(self):
        return {"mae": self.mae, "rmse": self.rmse, "p90": self.p90, "n": self.n}


def nearest_rank(x, q):
    """Smallest value with at least a fraction ``q`` of the sample at or below it."""
    x = np.sort(np.asarray(x, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of an empty sample")
    k = max(int(np.ceil(q * x.size)), 1)
    return float(x[k - 1])


def empirical_cdf(errors):
    x = np.sort(np.asarray(errors, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


def error_metrics(errors):
    e = np.asarray(errors, dtype=float)
    if e.size == 0 or np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be a non-empty array of finite non-negative values")
    x, y = empirical_cdf(e)
    return Metrics(float(e.mean()), float(np.sqrt(np.mean(e * e))), nearest_rank(e, 0.9),
                   int(e.size), x, y)


def evaluate(positions, truth, times=None):
    """Metrics of Euclidean position errors.

    ``truth`` is either an array aligned with ``positions`` or an object with
    ``position_at(times)`` (interpolated ground truth). Epochs whose estimate
    is NaN (filter not started yet) are skipped.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if hasattr(truth, "position_at"):
        if times is None:
            raise ValueError("times are needed to interpolate the ground truth")
        truth = truth.position_at(np.asarray(times, dtype=float))
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if truth.shape != positions.shape:
        raise ValueError("positions and truth must align")
    ok = np.all(np.isfinite(positions), axis=1)
    return error_metrics(np.linalg.norm(positions[ok] - truth[ok], axis=1))
