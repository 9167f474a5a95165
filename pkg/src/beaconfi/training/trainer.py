"""End-to-end training of a neural ranger from unlabeled walks."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff.optim import AdamState, adam_step
from ..autodiff.tensor import Tape, Tensor
from .alignment import unified_cost
from .diff_ekf import ekf_trajectory


@dataclass
class TrainConfig:
    mu1: float = 1.0
    mu2: float = 1.0
    lr: float = 1e-3
    epochs: int = 50
    split: float = 0.7
    K: int = 100
    seed: int = 0
    # frozen EKF settings
    s_x: float = 10.0
    s_y: float = 10.0
    v: float = 1.0
    joseph: bool = True

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("mu1 and mu2 must be non-negative")
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if self.lr <= 0 or self.epochs < 0 or self.K < 3:
            raise ValueError("need lr > 0, epochs >= 0 and K >= 3")

    @property
    def scenario(self):
        if self.mu1 > 0 and self.mu2 > 0:
            return "sensor-aided"
        if self.mu2 > 0:
            return "unsupervised"
        if self.mu1 > 0:
            return "sensor-only"
        return "frozen"

    def as_dict(self):
        return asdict(self)


@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_cost: list = field(default_factory=list)
    val_cost: list = field(default_factory=list)
    test_mae: list = field(default_factory=list)
    train_idx: list = field(default_factory=list)
    val_idx: list = field(default_factory=list)

    def append(self, epoch, train_cost, val_cost, test_mae=None):
        self.epoch.append(int(epoch))
        self.train_cost.append(float(train_cost))
        self.val_cost.append(float(val_cost))
        self.test_mae.append(np.nan if test_mae is None else float(test_mae))


class TrainingError(FloatingPointError):
    def __init__(self, epoch, dataset, value):
        self.epoch = epoch
        self.dataset = dataset
        super().__init__(f"non-finite cost {value} at epoch {epoch}, dataset {dataset}")


def split_indices(n, split, seed):
    """Reproducible train/validation partition of ``n`` datasets."""
    if n < 2:
        raise ValueError("training needs at least 2 datasets")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(round(split * n)), 1), n - 1)
    return sorted(perm[:n_train].tolist()), sorted(perm[n_train:].tolist())


def dataset_cost(model, ds, cfg):
    """Unified cost of one dataset; a Tensor that is on the tape when one is active."""
    d, s = model(ds.obs.csi, ds.obs.rss, ds.ap_ids)
    Z = ekf_trajectory(d, s, ds.epoch_index, ds.ap_positions, ds.times,
                       cfg.s_x, cfg.s_y, cfg.v, cfg.joseph)
    if not np.all(np.isfinite(Z.data)):
        # the alignment refuses non-finite input; report it as a non-finite cost instead
        return Tensor(np.nan)
    return unified_cost(Z, ds.pdr, ds.epoch_index, ds.ap_positions, d, cfg.mu1, cfg.mu2)


def mean_cost(model, datasets, idx, cfg, epoch=0):
    costs = []
    for i in idx:
        value = float(dataset_cost(model, datasets[i], cfg).data)
        if not np.isfinite(value):
            raise TrainingError(epoch, int(i), value)
        costs.append(value)
    return float(np.mean(costs))


def train(datasets, model, cfg, test=None, adam=None, start_epoch=0, history=None,
          on_epoch=None):
    """Optimize ``model`` in place; returns (model, history, adam state).

    Epoch 0 records costs before any update. Each later epoch visits the
    training datasets in a seeded order and takes one Adam step per
    dataset. ``test`` is an optional callable ``model -> MAE``. Passing the
    ``adam`` state, ``start_epoch`` and ``history`` of an earlier run resumes it.
    """
    train_idx, val_idx = split_indices(len(datasets), cfg.split, cfg.seed)
    if history is None:
        history = History(train_idx=train_idx, val_idx=val_idx)
    adam = adam or AdamState()
    if start_epoch == 0 and not history.epoch:
        history.append(0, mean_cost(model, datasets, train_idx, cfg),
                       mean_cost(model, datasets, val_idx, cfg),
                       test(model) if test else None)
        if on_epoch:
            on_epoch(0, model, adam, history)
    params = model.params
    for epoch in range(max(start_epoch, 0) + 1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(train_idx)
        costs = []
        for i in order:
            params.zero_grad()
            with Tape() as tape:
                J = dataset_cost(model, datasets[i], cfg)
            value = float(J.data)
            if not np.isfinite(value):
                raise TrainingError(epoch, int(i), value)
            costs.append(value)
            if J.requires_grad:
                tape.backward(J)
            adam_step(params, params.grads(), adam, cfg.lr)
        history.append(epoch, np.mean(costs), mean_cost(model, datasets, val_idx, cfg, epoch),
                       test(model) if test else None)
        if on_epoch:
            on_epoch(epoch, model, adam, history)
    return model, history, adam
