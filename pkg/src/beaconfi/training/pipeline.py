"""Ranging plus positioning over a dataset, for every backend and both modes."""

import numpy as np

from ..positioning import EpochMeasurement, FusedPositioner, WifiPositioner
from ..ranging.baselines import BACKENDS, CalibrationParams
from ..ranging.inputs import to_features
from .evaluate import evaluate

MODES = ("wifi_only", "fused")
NN_BACKENDS = ("fc", "cnn")


def range_dataset(ds, backend, cal=None, model=None):
    """Numeric (d, s) for every ranging row of ``ds``."""
    if backend in BACKENDS:
        out = BACKENDS[backend](to_features(ds.obs.csi, ds.obs.rss), cal or CalibrationParams(),
                                ds.obs.csi_complex)
        return out.d_hat, out.s_hat
    if backend in NN_BACKENDS:
        if model is None:
            raise ValueError(f"backend {backend!r} needs a trained model")
        if model.topology.arch != backend:
            raise ValueError(f"model is a {model.topology.arch!r} ranger, not {backend!r}")
        d, s = model(ds.obs.csi, ds.obs.rss, ds.ap_ids)
        return d.data, s.data
    raise ValueError(f"unknown backend {backend!r}")


def measurements(ds, d, s):
    """One EpochMeasurement (or None) per epoch of ``ds``."""
    out = [None] * ds.K
    for k in np.unique(ds.epoch_index):
        idx = np.flatnonzero(ds.epoch_index == k)
        out[k] = EpochMeasurement(ds.ap_positions[idx], d[idx], s[idx], ds.ap_ids[idx])
    return out


def locate(ds, d, s, mode="wifi_only", wifi=None, fused=None):
    meas = measurements(ds, d, s)
    if mode == "wifi_only":
        return (wifi or WifiPositioner()).predict(ds.times, meas)
    if mode == "fused":
        return (fused or FusedPositioner()).predict(ds.times, meas, ds.pdr)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def evaluate_dataset(ds, backend, mode="wifi_only", cal=None, model=None, wifi=None, fused=None):
    """Return (metrics, positioning result) against the dataset's ground truth."""
    if ds.truth is None:
        raise ValueError("dataset has no ground truth")
    d, s = range_dataset(ds, backend, cal, model)
    res = locate(ds, d, s, mode, wifi, fused)
    return evaluate(res.positions, ds.truth), res
