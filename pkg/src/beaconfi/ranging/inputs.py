"""Per-AP ranging inputs built from B beacon receptions on two antennas.

Feature rows used by the estimators are flat: the 2*B*52 CSI amplitudes
(antenna-major, then beacon, then sub-carrier -26..26) followed by the 2*B
RSS values (antenna-major).
"""

from dataclasses import dataclass

import numpy as np

from ..channel import N_SUBCARRIERS


@dataclass
class RangingInput:
    csi_image: np.ndarray
    rss_vectors: np.ndarray
    ap_id: int = -1

    def __post_init__(self):
        self.csi_image = np.asarray(self.csi_image, dtype=float)
        self.rss_vectors = np.asarray(self.rss_vectors, dtype=float)
        if self.csi_image.ndim != 3 or self.csi_image.shape[0] != 2 \
                or self.csi_image.shape[2] != N_SUBCARRIERS or self.csi_image.shape[1] < 1:
            raise ValueError(f"csi_image must be (2, B, {N_SUBCARRIERS}), got {self.csi_image.shape}")
        if self.rss_vectors.shape != self.csi_image.shape[:2]:
            raise ValueError(f"rss_vectors must be {self.csi_image.shape[:2]}, "
                             f"got {self.rss_vectors.shape}")
        if not (np.all(np.isfinite(self.csi_image)) and np.all(np.isfinite(self.rss_vectors))):
            raise ValueError("ranging input must be finite")

    @property
    def n_beacons(self):
        return self.csi_image.shape[1]

    @property
    def mean_rss(self):
        return float(self.rss_vectors.mean())

    def features(self):
        return np.concatenate([self.csi_image.ravel(), self.rss_vectors.ravel()])


class ApOffsetTable(dict):
    """Per-AP RSS offsets in dB; unknown APs read as 0."""

    def __missing__(self, ap_id):
        return 0.0

    def __setitem__(self, ap_id, value):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"offset for AP {ap_id} must be finite")
        super().__setitem__(int(ap_id), value)

    def lookup(self, ap_ids):
        return np.array([self[int(a)] for a in np.atleast_1d(ap_ids)], dtype=float)


def build_input(frames, offsets=None, ap_id=None, n_beacons=4):
    """Assemble a :class:`RangingInput` from ``n_beacons`` frames per antenna.

    Frames are ordered by timestamp within each antenna; both antennas must
    carry the same beacon timestamps.
    """
    frames = list(frames)
    ids = {f.ap_id for f in frames}
    if len(ids) > 1:
        raise ValueError(f"frames from several APs: {sorted(ids)}")
    if ap_id is None:
        if not ids:
            raise ValueError("no frames given")
        ap_id = ids.pop()
    elif ids and ids != {ap_id}:
        raise ValueError(f"frames belong to AP {ids.pop()}, not {ap_id}")
    per_ant = []
    for ant in (0, 1):
        fs = sorted((f for f in frames if f.antenna_id == ant), key=lambda f: f.timestamp)
        if len(fs) != n_beacons:
            raise ValueError(f"antenna {ant}: expected {n_beacons} frames, got {len(fs)}")
        per_ant.append(fs)
    if [f.timestamp for f in per_ant[0]] != [f.timestamp for f in per_ant[1]]:
        raise ValueError("antennas do not share the same beacon frames")
    csi = np.array([[np.abs(f.h) for f in fs] for fs in per_ant])
    rss = np.array([[f.rss_dbm for f in fs] for fs in per_ant])
    off = 0.0 if offsets is None else offsets[ap_id]
    return RangingInput(csi, rss + off, ap_id)


def n_features(n_beacons):
    return 2 * n_beacons * N_SUBCARRIERS + 2 * n_beacons


def stack_inputs(inputs):
    return np.array([x.features() for x in inputs])


def to_features(csi, rss):
    """Flat rows from (n, 2, B, 52) amplitudes and (n, 2, B) RSS."""
    csi = np.asarray(csi, dtype=float)
    n = csi.shape[0]
    return np.concatenate([csi.reshape(n, -1), np.asarray(rss, dtype=float).reshape(n, -1)], axis=1)


def split_features(X, n_beacons):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_features(n_beacons):
        raise ValueError(f"expected rows of {n_features(n_beacons)} features for B={n_beacons}, "
                         f"got shape {X.shape}")
    n = X.shape[0]
    k = 2 * n_beacons * N_SUBCARRIERS
    return X[:, :k].reshape(n, 2, n_beacons, N_SUBCARRIERS), X[:, k:].reshape(n, 2, n_beacons)


def infer_beacons(X):
    """Recover B from the feature width."""
    width = np.shape(X)[-1]
    b, rem = divmod(width, 2 * N_SUBCARRIERS + 2)
    if rem or b < 1:
        raise ValueError(f"feature width {width} does not match any beacon count")
    return b
