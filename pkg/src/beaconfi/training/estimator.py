"""Scikit-learn style wrapper for the trainable rangers."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_ap_ids, check_features
from ..ranging.inputs import split_features
from ..ranging.network import NnModel, Topology
from .trainer import TrainConfig, train


class NeuralRanger(BaseEstimator):
    """CNN or FC ranger trained without distance labels.

    ``fit`` takes a list of :class:`~beaconfi.training.dataset.TrainingDataset`
    (walks with PDR); ``predict`` takes flat feature rows plus the AP id of
    each row so the learned offsets apply.
    """

    def __init__(self, arch="cnn", n_beacons=4, n_filters=64, hidden=None, mu1=1.0, mu2=1.0,
                 lr=1e-3, epochs=50, split=0.7, d_init=10.0, s_init=3.0, random_state=0):
        self.arch = arch
        self.n_beacons = n_beacons
        self.n_filters = n_filters
        self.hidden = hidden
        self.mu1 = mu1
        self.mu2 = mu2
        self.lr = lr
        self.epochs = epochs
        self.split = split
        self.d_init = d_init
        self.s_init = s_init
        self.random_state = random_state

    def _topology(self):
        hidden = self.hidden or ((256, 256, 256) if self.arch == "cnn" else (128, 128))
        return Topology(arch=self.arch, n_beacons=self.n_beacons, n_filters=self.n_filters,
                        hidden=tuple(hidden), d_init=self.d_init, s_init=self.s_init)

    def fit(self, datasets, y=None, test=None):
        cfg = TrainConfig(mu1=self.mu1, mu2=self.mu2, lr=self.lr, epochs=self.epochs,
                          split=self.split, seed=self.random_state)
        ap_ids = np.unique(np.concatenate([ds.ap_ids for ds in datasets]))
        model = NnModel.create(self._topology(), self.random_state, ap_ids)
        self.model_, self.history_, self.adam_ = train(datasets, model, cfg, test=test)
        return self

    def predict(self, X, ap_ids=None, return_std=False):
        check_is_fitted(self, "model_")
        X, b = check_features(X, self.n_beacons)
        ap_ids = check_ap_ids(ap_ids, X.shape[0])
        csi, rss = split_features(X, b)
        d, s = self.model_(csi, rss, ap_ids)
        return (d.data, s.data) if return_std else d.data
