"""Turning a simulated (or recorded) walk into per-epoch ranging observations."""

from dataclasses import dataclass, fields

import numpy as np

from ..pdr import PedestrianDeadReckoning, synchronize
from ..positioning import select_aps


@dataclass
class EpochObservations:
    """One row per (epoch, AP) with B complete beacons, after AP selection.

    ``csi`` holds amplitudes (n, 2, B, 52), ``rss`` raw dBm (n, 2, B) and
    ``csi_complex`` the complex CSI behind the amplitudes.
    ``truth_dist`` and ``los`` are ground truth (simulation only).
    """

    epoch: np.ndarray
    ap_ids: np.ndarray
    ap_positions: np.ndarray
    csi: np.ndarray
    rss: np.ndarray
    truth_dist: np.ndarray
    los: np.ndarray
    csi_complex: np.ndarray

    def __len__(self):
        return len(self.epoch)

    def take(self, idx):
        return EpochObservations(*(getattr(self, f.name)[idx] for f in fields(self)))

    @property
    def mean_rss(self):
        return self.rss.reshape(len(self), -1).mean(axis=1)


def epoch_observations(log, n_beacons=4, n_max=5):
    """Group receptions by (epoch, AP), keep APs with ``n_beacons`` beacons on both antennas.

    The earliest ``n_beacons`` beacons of each group are used; per epoch up
    to ``n_max`` APs with the highest mean RSS are kept (ties: lower ap_id).
    Pass ``n_max=None`` to keep every eligible AP.
    """
    a0 = np.flatnonzero(log.antenna == 0)
    a1 = a0 + 1
    if a0.size and (a1[-1] >= len(log) or np.any(log.antenna[a1] != 1)
                    or np.any(log.timestamp[a1] != log.timestamp[a0])
                    or np.any(log.ap_id[a1] != log.ap_id[a0])):
        raise ValueError("beacon log rows must come in (antenna 0, antenna 1) pairs")
    order = np.lexsort((log.timestamp[a0], log.ap_id[a0], log.epoch[a0]))
    b0 = a0[order]
    key = np.stack([log.epoch[b0], log.ap_id[b0]], axis=1)
    uniq, start, count = np.unique(key, axis=0, return_index=True, return_counts=True)
    ok = count >= n_beacons
    uniq, start = uniq[ok], start[ok]
    rows0 = b0[start[:, None] + np.arange(n_beacons)[None, :]]   # (G, B)
    rows = np.stack([rows0, rows0 + 1], axis=1)                  # (G, 2, B)
    csi_complex = log.csi[rows]
    csi = np.abs(csi_complex)
    rss = log.rss_dbm[rows]
    epoch, ap = uniq[:, 0], uniq[:, 1]
    truth = log.truth_xy[rows].reshape(len(epoch), 2 * n_beacons, 2).mean(axis=1)
    ap_pos = log.ap_positions[ap]
    obs = EpochObservations(epoch, ap, ap_pos, csi, rss,
                            np.linalg.norm(truth - ap_pos, axis=1),
                            log.los[rows].reshape(len(epoch), 2 * n_beacons).mean(axis=1) >= 0.5,
                            csi_complex)
    if n_max is None:
        return obs
    keep = []
    mean = obs.mean_rss
    for e in np.unique(epoch):
        idx = np.flatnonzero(epoch == e)
        keep.append(idx[select_aps(ap[idx], mean[idx], n_max)])
    keep = np.sort(np.concatenate(keep)) if keep else np.zeros(0, dtype=int)
    return obs.take(keep)


@dataclass
class TrainingDataset:
    """K consecutive epochs: times, synchronized PDR positions and ranging rows.

    ``epoch_index`` maps each row to its epoch in 0..K-1. ``truth`` holds
    true positions at the epoch times when known.
    """

    times: np.ndarray
    pdr: np.ndarray
    epoch_index: np.ndarray
    obs: EpochObservations
    truth: np.ndarray = None

    def __post_init__(self):
        K = len(self.times)
        if self.pdr.shape != (K, 2):
            raise ValueError("one PDR position per epoch required")
        if len(self.epoch_index) and (self.epoch_index.min() < 0 or self.epoch_index.max() >= K):
            raise ValueError("epoch_index out of range")
        if K < 3:
            raise ValueError("a dataset needs K >= 3 epochs")

    @property
    def K(self):
        return len(self.times)

    @property
    def ap_positions(self):
        return self.obs.ap_positions

    @property
    def ap_ids(self):
        return self.obs.ap_ids


def _window(times, pdr, truth, obs, e0, e1):
    """Epochs e0..e1-1, trimmed to start at the first epoch with ranging rows."""
    sel = (obs.epoch >= e0) & (obs.epoch < e1)
    if not np.any(sel):
        return None
    sub = obs.take(np.flatnonzero(sel))
    first = int(sub.epoch.min())
    if e1 - first < 3:
        return None
    ks = slice(first, e1)
    return TrainingDataset(times[ks], pdr[ks], sub.epoch - first, sub,
                           None if truth is None else truth[ks])


def build_datasets(walk, n_beacons=4, n_max=5, K=100, pdr=None):
    """Split a walk into consecutive K-epoch datasets (K=None: one dataset).

    Only epochs inside the IMU span are used; incomplete trailing windows
    are dropped.
    """
    pdr = PedestrianDeadReckoning() if pdr is None else pdr
    traj = pdr.fit().transform(walk.imu)
    log = walk.beacons
    t = log.epoch_times
    lo, hi = traj.span
    valid = np.flatnonzero((t >= lo) & (t <= hi))
    if valid.size == 0:
        raise ValueError("no ranging epoch falls inside the IMU record")
    e_lo, e_hi = int(valid[0]), int(valid[-1]) + 1
    obs = epoch_observations(log, n_beacons, n_max)
    obs = obs.take(np.flatnonzero((obs.epoch >= e_lo) & (obs.epoch < e_hi)))
    P = np.full((len(t), 2), np.nan)
    P[e_lo:e_hi] = synchronize(traj, t[e_lo:e_hi])
    truth = None if walk.truth is None else walk.truth.position_at(t)
    single = K is None
    K = e_hi - e_lo if single else K
    out = []
    for e0 in range(e_lo, e_hi, K):
        ds = _window(t, P, truth, obs, e0, min(e0 + K, e_hi))
        # split mode keeps only complete K-epoch windows
        if ds is not None and (single or ds.K == K):
            out.append(ds)
    return out
