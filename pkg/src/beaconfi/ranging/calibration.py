"""Fitting the model-based backends on labeled calibration data."""

import numpy as np
from scipy.optimize import least_squares

from .baselines import (D_MAX, D_MIN, CalibrationParams, CupidParams, PathLossParams,
                        PolynomialParams, StdModel, cupid_range, edp_ratio, pathloss_distance,
                        polynomial_distance)
from .inputs import to_features

PATHLOSS_GRID = (np.arange(-60.0, 0.0 + 1e-9, 0.5), np.arange(1.0, 6.0 + 1e-9, 0.05))


def nmse(d_hat, d_true):
    d_true = np.asarray(d_true, dtype=float)
    return float(np.mean(((np.asarray(d_hat, dtype=float) - d_true) / d_true) ** 2))


def _pathloss_grid_nmse(rss, d, grid):
    r0, eta = np.meshgrid(*grid, indexing="ij")
    pred = 10.0 ** ((r0[..., None] - rss) / (10.0 * eta[..., None]))
    return np.mean(((pred - d) / d) ** 2, axis=-1), r0, eta


def fit_pathloss(rss, d_true, grid=PATHLOSS_GRID):
    """Grid search then local least-squares refinement of NMSE."""
    rss = np.asarray(rss, dtype=float)
    d = np.asarray(d_true, dtype=float)
    cost, r0, eta = _pathloss_grid_nmse(rss, d, grid)
    i = np.unravel_index(np.argmin(cost), cost.shape)
    x0 = np.array([r0[i], eta[i]])

    def resid(x):
        return pathloss_distance(rss, PathLossParams(x[0], x[1])) / d - 1.0

    sol = least_squares(resid, x0, bounds=([-200.0, 1e-3], [100.0, 20.0]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    best = sol.x if np.mean(resid(sol.x) ** 2) <= cost[i] else x0
    return PathLossParams(float(best[0]), float(best[1]))


def fit_polynomial(rss, d_true):
    """Exact NMSE minimizer: least squares with rows scaled by 1/d."""
    rss = np.asarray(rss, dtype=float)
    d = np.asarray(d_true, dtype=float)
    A = np.c_[rss ** 2, rss, np.ones_like(rss)] / d[:, None]
    g, *_ = np.linalg.lstsq(A, np.ones_like(d), rcond=None)
    return PolynomialParams(float(g[0]), float(g[1]), float(g[2]))


def bucketed_std(d_hat, d_true, width=1.0, min_count=5):
    """Empirical error std at 1 m targets over estimates within ``width`` of each target."""
    d_hat = np.asarray(d_hat, dtype=float)
    err = d_hat - np.asarray(d_true, dtype=float)
    targets = np.arange(1.0, np.floor(d_hat.max()) + 1.0) if d_hat.size else np.zeros(0)
    xs, ys = [], []
    for t in targets:
        m = np.abs(d_hat - t) < width
        if m.sum() >= min_count:
            xs.append(t)
            ys.append(np.std(err[m], ddof=1))
    return np.array(xs), np.array(ys)


def fit_std_model(d_hat, d_true, width=1.0, min_count=5):
    """Least-squares line through the bucketed std curve, slope constrained >= 0."""
    x, y = bucketed_std(d_hat, d_true, width, min_count)
    if x.size == 0:
        raise ValueError("not enough calibration data to fit a std model")
    if x.size == 1:
        return StdModel(0.0, float(y[0]))
    slope, intercept = np.polyfit(x, y, 1)
    if slope < 0:
        return StdModel(0.0, float(y.mean()))
    return StdModel(float(slope), float(intercept))


def fit_edp_threshold(ratio, los):
    """Threshold on the EDP ratio maximizing LOS/NLOS accuracy; returns (threshold, accuracy)."""
    ratio = np.asarray(ratio, dtype=float)
    los = np.asarray(los, dtype=bool)
    r = np.unique(ratio)
    cands = np.r_[r[0] - 1e-9, 0.5 * (r[1:] + r[:-1]), r[-1] + 1e-9]
    acc = np.array([np.mean((ratio >= c) == los) for c in cands])
    i = int(np.argmax(acc))
    return float(cands[i]), float(acc[i])


def fit_cupid(csi, rss, d_true, los):
    """Threshold from labels, then a shared reference RSS with per-class exponents."""
    ratio = edp_ratio(csi)
    thr, _ = fit_edp_threshold(ratio, los)
    cls = ratio >= thr
    d = np.asarray(d_true, dtype=float)
    pl = fit_pathloss(rss, d)

    def resid(x):
        eta = np.where(cls, x[1], x[2])
        return 10.0 ** ((x[0] - rss) / (10.0 * eta)) / d - 1.0

    sol = least_squares(resid, [pl.rss_d0, pl.eta, pl.eta], bounds=([-200, 1e-3, 1e-3], [100, 20, 20]),
                        xtol=1e-12, ftol=1e-12)
    return CupidParams(float(sol.x[0]), float(sol.x[1]), float(sol.x[2]), thr)


def fit_baselines(csi, rss, d_true, los=None):
    """Calibrate all model-based backends from labeled records.

    ``csi`` is (n, 2, B, 52) complex CSI (or amplitudes), ``rss`` (n, 2, B) in dBm and
    ``d_true`` the true AP distances. Without ``los`` labels the CUPID
    parameters keep their defaults.
    """
    csi = np.asarray(csi)
    rss_mean = np.asarray(rss, dtype=float).reshape(len(d_true), -1).mean(axis=1)
    d = np.asarray(d_true, dtype=float)
    cal = CalibrationParams()
    cal.pathloss = fit_pathloss(rss_mean, d)
    cal.polynomial = fit_polynomial(rss_mean, d)
    cal.std["pathloss"] = fit_std_model(_clip(pathloss_distance(rss_mean, cal.pathloss)), d)
    cal.std["polynomial"] = fit_std_model(_clip(polynomial_distance(rss_mean, cal.polynomial)), d)
    if los is not None:
        cal.cupid = fit_cupid(csi, rss_mean, d, los)
        dc = cupid_range(to_features(np.abs(csi), rss), cal, csi).d_hat
        cal.std["cupid"] = fit_std_model(dc, d)
    else:
        cal.std["cupid"] = cal.std["pathloss"]
    return cal


def _clip(d):
    return np.clip(d, D_MIN, D_MAX)
