"""The 2-state range EKF written with tape operations, so a trajectory can be differentiated
with respect to the ranging outputs that drive it."""

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor
from ..positioning import MIN_JACOBIAN_RANGE, epoch_dts


def ekf_trajectory(d, s, epoch_index, ap_positions, times, s_x=10.0, s_y=10.0, v=1.0,
                   joseph=True):
    """Run the EKF over K epochs; returns Z as a (K, 2) Tensor.

    ``d``/``s`` are (M,) Tensors of ranging outputs for rows tied to epochs
    by ``epoch_index``. The filter starts at the centroid of the APs of the
    first epoch that has rows; earlier epochs repeat that start point.
    """
    epoch_index = np.asarray(epoch_index, dtype=int)
    ap_positions = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    K = len(times)
    rows = [np.flatnonzero(epoch_index == k) for k in range(K)]
    first = next((k for k in range(K) if rows[k].size), None)
    if first is None:
        raise ValueError("no epoch carries ranging rows")
    z = Tensor(ap_positions[rows[first]].mean(axis=0))
    P = Tensor(np.diag([s_x ** 2, s_y ** 2]))
    dts = epoch_dts(times)
    out = []
    for k in range(K):
        if k >= first:
            P = P + 0.5 * (v * dts[k]) ** 2 * np.eye(2)
            if rows[k].size:
                z, P = _update(z, P, d, s, rows[k], ap_positions[rows[k]], joseph)
        out.append(z)
    return ops.stack(out, axis=0)


def _update(z, P, d, s, idx, aps, joseph):
    diff = z - aps
    r = ops.sqrt(ops.reduce_sum(ops.square(diff), axis=1))
    keep = np.flatnonzero(r.data >= MIN_JACOBIAN_RANGE)
    if keep.size == 0:
        return z, P
    if keep.size < idx.size:
        diff, r, idx = ops.getitem(diff, keep), ops.getitem(r, keep), idx[keep]
    n = idx.size
    H = diff / ops.reshape(r, (n, 1))
    e = ops.getitem(d, idx) - r
    lam = np.eye(n) * ops.reshape(ops.square(ops.getitem(s, idx)), (1, n))
    S = H @ P @ H.T + lam
    G = P @ H.T @ ops.inv(S)
    z = z + G @ e
    A = np.eye(2) - G @ H
    if joseph:
        P = A @ P @ A.T + G @ lam @ G.T
    else:
        P = A @ P
    return z, (P + P.T) * 0.5
