"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .ranging.inputs import infer_beacons


def check_features(X, n_beacons=None):
    """Validate a 2-D finite feature matrix and return it with its beacon count."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    b = infer_beacons(X)
    if n_beacons is not None and b != n_beacons:
        raise ValueError(f"features encode B={b} beacons, estimator expects B={n_beacons}")
    return X, b


def check_targets(y, n):
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (n,):
        raise ValueError(f"expected {n} targets, got {y.shape[0]}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("target distances must be finite and positive")
    return y


def check_ap_ids(ap_ids, n):
    if ap_ids is None:
        return None
    ap_ids = np.asarray(ap_ids).reshape(-1)
    if ap_ids.shape != (n,):
        raise ValueError(f"expected {n} ap_ids, got {ap_ids.shape[0]}")
    return ap_ids.astype(int)
