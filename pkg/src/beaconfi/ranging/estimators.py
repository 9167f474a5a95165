"""Scikit-learn style wrappers around the model-based backends.

``X`` rows follow the flat feature layout of :mod:`beaconfi.ranging.inputs`;
``y`` holds true AP distances in meters. Unfitted estimators use the
``calibration`` they were constructed with (library defaults if None).
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .._validation import check_features, check_targets
from .baselines import (D_MAX, D_MIN, CalibrationParams, cupid_range, mean_rss,
                        pathloss_distance, pathloss_range, polynomial_distance, polynomial_range)
from .calibration import fit_cupid, fit_pathloss, fit_polynomial, fit_std_model
from .inputs import split_features


class _ModelRanger(RegressorMixin, BaseEstimator):
    backend = None

    def __init__(self, calibration=None):
        self.calibration = calibration

    def _cal(self):
        cal = getattr(self, "calibration_", None)
        if cal is None:
            cal = self.calibration if self.calibration is not None else CalibrationParams()
        return cal

    def predict(self, X, return_std=False, csi=None):
        X, _ = check_features(X)
        out = self._range(X, self._cal(), csi)
        return (out.d_hat, out.s_hat) if return_std else out.d_hat


class PathLossRanger(_ModelRanger):
    backend = "pathloss"
    _range = staticmethod(pathloss_range)

    def fit(self, X, y):
        X, _ = check_features(X)
        y = check_targets(y, X.shape[0])
        cal = _copy(self._cal())
        rss = mean_rss(X)
        cal.pathloss = fit_pathloss(rss, y)
        cal.std["pathloss"] = fit_std_model(np.clip(pathloss_distance(rss, cal.pathloss), D_MIN, D_MAX), y)
        self.calibration_ = cal
        self.n_features_in_ = X.shape[1]
        return self


class PolynomialRanger(_ModelRanger):
    backend = "polynomial"
    _range = staticmethod(polynomial_range)

    def fit(self, X, y):
        X, _ = check_features(X)
        y = check_targets(y, X.shape[0])
        cal = _copy(self._cal())
        rss = mean_rss(X)
        cal.polynomial = fit_polynomial(rss, y)
        cal.std["polynomial"] = fit_std_model(
            np.clip(polynomial_distance(rss, cal.polynomial), D_MIN, D_MAX), y)
        self.calibration_ = cal
        self.n_features_in_ = X.shape[1]
        return self


class CupidRanger(_ModelRanger):
    backend = "cupid"
    _range = staticmethod(cupid_range)

    def fit(self, X, y, los=None, csi=None):
        """``los`` holds ground-truth LOS labels used to set the EDP threshold.

        ``csi`` optionally gives complex CSI (n, 2, B, 52) for the EDP; pass
        the same kind of CSI to ``predict``.
        """
        X, b = check_features(X)
        y = check_targets(y, X.shape[0])
        if los is None:
            raise ValueError("CupidRanger.fit needs LOS/NLOS labels")
        cal = _copy(self._cal())
        if csi is None:
            csi, _ = split_features(X, b)
        cal.cupid = fit_cupid(csi, mean_rss(X), y, np.asarray(los, dtype=bool))
        cal.std["cupid"] = fit_std_model(cupid_range(X, cal, csi).d_hat, y)
        self.calibration_ = cal
        self.n_features_in_ = X.shape[1]
        return self


def _copy(cal):
    return CalibrationParams.from_flat(cal.to_flat())
